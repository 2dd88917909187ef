"""Non-motorized road popularity (walkability / bikeability) from sports GPS tracks."""
from .classify_export import ClassBreaks, export_geojson, hourly_histogram, jenks_breaks, period_summary
from .map_matching import MatchedTrack, MatcherConfig, match_track, traversed_segments, viterbi
from .popularity import PopularityScore, UsageTable, accumulate, evaluate, p_index
from .road_network import RoadNetwork, RoadSegment, Vertex, load_network, project_to_segment
from .tracks import CleaningConfig, PeriodScheme, Track, assign_period, clean, parse_tracks

__version__ = "0.1.0"
