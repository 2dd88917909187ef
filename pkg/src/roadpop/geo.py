"""Spherical-earth geometry helpers.

All functions accept scalars or numpy arrays (broadcasting) and work in
degrees for coordinates and meters for distances.
"""
import numpy as np

EARTH_RADIUS_M = 6_371_000.0


def haversine(lat1, lon1, lat2, lon2):
    """Great-circle distance in meters."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dp = p2 - p1
    dl = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dp / 2.0) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dl / 2.0) ** 2
    return 2.0 * EARTH_RADIUS_M * np.arcsin(np.sqrt(np.clip(a, 0.0, 1.0)))


def aeqd_forward(lat0, lon0, lat, lon):
    """Azimuthal equidistant projection of (lat, lon) centred on (lat0, lon0).

    Returns planar (x, y) in meters, x east and y north. The distance from the
    origin is the exact great-circle distance to the centre.
    """
    p0 = np.radians(lat0)
    p = np.radians(lat)
    dl = np.radians(np.asarray(lon) - np.asarray(lon0))
    c = haversine(lat0, lon0, lat, lon) / EARTH_RADIUS_M
    cos_p = np.cos(p)
    theta = np.arctan2(
        np.sin(dl) * cos_p,
        np.cos(p0) * np.sin(p) - np.sin(p0) * cos_p * np.cos(dl),
    )
    r = EARTH_RADIUS_M * c
    return r * np.sin(theta), r * np.cos(theta)


def aeqd_inverse(lat0, lon0, x, y):
    """Inverse of :func:`aeqd_forward`; returns (lat, lon) in degrees."""
    p0 = np.radians(lat0)
    c = np.hypot(x, y) / EARTH_RADIUS_M
    theta = np.arctan2(x, y)
    sin_c = np.sin(c)
    cos_c = np.cos(c)
    sin_p = np.sin(p0) * cos_c + np.cos(p0) * sin_c * np.cos(theta)
    p = np.arcsin(np.clip(sin_p, -1.0, 1.0))
    dl = np.arctan2(np.sin(theta) * sin_c * np.cos(p0), cos_c - np.sin(p0) * sin_p)
    lon = np.asarray(lon0) + np.degrees(dl)
    lon = (lon + 180.0) % 360.0 - 180.0
    return np.degrees(p), lon


def offset(lat, lon, north_m, east_m):
    """Shift a coordinate by small north/east offsets in meters."""
    dlat = np.degrees(np.asarray(north_m) / EARTH_RADIUS_M)
    dlon = np.degrees(np.asarray(east_m) / (EARTH_RADIUS_M * np.cos(np.radians(lat))))
    return lat + dlat, lon + dlon
