//! Two-body circular-orbit geometry.
//!
//! Spherical Earth, no perturbations. Everything is expressed in an inertial
//! frame whose x axis points at the prime meridian at `gmst0 = 0`, t = 0.
//! Angles are radians; degrees only appear on [`GroundStation`] because that is
//! how station catalogs are written.

mod stations;

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use stations::{
    builtin_catalog, load_catalog, parse_catalog, station_subset, VALID_STATION_COUNTS,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EarthModel {
    pub radius_km: f64,
    pub mu_km3_s2: f64,
    pub rotation_rate_rad_s: f64,
    /// Extra altitude an inter-satellite line of sight must clear above the surface.
    pub grazing_margin_km: f64,
}

impl Default for EarthModel {
    fn default() -> Self {
        Self {
            radius_km: 6371.0,
            mu_km3_s2: 398_600.441_8,
            rotation_rate_rad_s: 7.292_115_9e-5,
            grazing_margin_km: 100.0,
        }
    }
}

impl EarthModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.radius_km > 0.0) || !(self.mu_km3_s2 > 0.0) || !(self.grazing_margin_km >= 0.0) {
            return Err(Error::InvalidInput(format!("invalid earth model {self:?}")));
        }
        Ok(())
    }

    pub fn sidereal_day_s(&self) -> f64 {
        TAU / self.rotation_rate_rad_s
    }
}

/// Circular orbit elements. Eccentricity and argument of perigee are fixed at zero,
/// so the true anomaly doubles as the argument of latitude.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrbitSpec {
    pub semi_major_axis_km: f64,
    pub inclination_rad: f64,
    pub raan_rad: f64,
    pub true_anomaly_epoch_rad: f64,
}

impl OrbitSpec {
    pub fn circular(semi_major_axis_km: f64, inclination_rad: f64, raan_rad: f64, anomaly_rad: f64) -> Self {
        Self {
            semi_major_axis_km,
            inclination_rad,
            raan_rad,
            true_anomaly_epoch_rad: anomaly_rad,
        }
    }

    pub const fn eccentricity(&self) -> f64 {
        0.0
    }

    pub const fn arg_perigee_rad(&self) -> f64 {
        0.0
    }

    pub fn validate(&self, earth: &EarthModel) -> Result<()> {
        let finite = [self.inclination_rad, self.raan_rad, self.true_anomaly_epoch_rad]
            .iter()
            .all(|a| a.is_finite());
        if !finite || !(self.semi_major_axis_km > earth.radius_km) {
            return Err(Error::InvalidInput(format!("invalid orbit {self:?}")));
        }
        Ok(())
    }

    pub fn period_s(&self, earth: &EarthModel) -> f64 {
        TAU * (self.semi_major_axis_km.powi(3) / earth.mu_km3_s2).sqrt()
    }

    pub fn mean_motion(&self, earth: &EarthModel) -> f64 {
        (earth.mu_km3_s2 / self.semi_major_axis_km.powi(3)).sqrt()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstellationSpec {
    pub n_clusters: usize,
    pub sats_per_cluster: usize,
    pub altitude_km: f64,
    pub inclination_rad: f64,
    /// Total RAAN span shared out between clusters; pi gives a Walker-Star layout.
    pub raan_spread_rad: f64,
}

impl ConstellationSpec {
    /// Polar 500 km Walker-Star layout.
    pub fn walker_star(n_clusters: usize, sats_per_cluster: usize) -> Self {
        Self {
            n_clusters,
            sats_per_cluster,
            altitude_km: 500.0,
            inclination_rad: PI / 2.0,
            raan_spread_rad: PI,
        }
    }

    pub fn total(&self) -> usize {
        self.n_clusters * self.sats_per_cluster
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_clusters == 0 || self.sats_per_cluster == 0 || !(self.altitude_km > 0.0) {
            return Err(Error::InvalidInput(format!("invalid constellation {self:?}")));
        }
        if !self.inclination_rad.is_finite() || !self.raan_spread_rad.is_finite() {
            return Err(Error::InvalidInput("constellation angles must be finite".into()));
        }
        Ok(())
    }

    pub fn satellite_ids(&self) -> Vec<SatelliteId> {
        (0..self.n_clusters)
            .flat_map(|c| (0..self.sats_per_cluster).map(move |s| SatelliteId::new(c, s)))
            .collect()
    }
}

/// Satellite `slot_idx` of orbital cluster `cluster_idx`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SatelliteId {
    pub cluster_idx: usize,
    pub slot_idx: usize,
}

impl SatelliteId {
    pub const fn new(cluster_idx: usize, slot_idx: usize) -> Self {
        Self {
            cluster_idx,
            slot_idx,
        }
    }

    /// Row-major index into a constellation with `sats_per_cluster` slots per cluster.
    pub fn flat_index(&self, sats_per_cluster: usize) -> usize {
        self.cluster_idx * sats_per_cluster + self.slot_idx
    }
}

impl fmt::Display for SatelliteId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "c{}_s{}", self.cluster_idx, self.slot_idx)
    }
}

impl Serialize for SatelliteId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SatelliteId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

impl FromStr for SatelliteId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidInput(format!("malformed satellite id {s:?}, expected c<cluster>_s<slot>"));
        let rest = s.strip_prefix('c').ok_or_else(bad)?;
        let (cluster, slot) = rest.split_once("_s").ok_or_else(bad)?;
        let digits = |x: &str| !x.is_empty() && x.bytes().all(|b| b.is_ascii_digit());
        if !digits(cluster) || !digits(slot) {
            return Err(bad());
        }
        Ok(SatelliteId::new(
            cluster.parse().map_err(|_| bad())?,
            slot.parse().map_err(|_| bad())?,
        ))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundStation {
    pub name: String,
    pub lat_deg: f64,
    pub lon_deg: f64,
    #[serde(default)]
    pub alt_km: f64,
    /// Per-station elevation mask; falls back to the planner default.
    #[serde(default)]
    pub min_elev_deg: Option<f64>,
}

impl GroundStation {
    pub fn new(name: impl Into<String>, lat_deg: f64, lon_deg: f64) -> Result<Self> {
        let gs = Self {
            name: name.into(),
            lat_deg,
            lon_deg,
            alt_km: 0.0,
            min_elev_deg: None,
        };
        gs.validate()?;
        Ok(gs)
    }

    pub fn validate(&self) -> Result<()> {
        if !(-90.0..=90.0).contains(&self.lat_deg) || !(-180.0..=180.0).contains(&self.lon_deg) {
            return Err(Error::InvalidInput(format!(
                "station {:?} has out-of-range coordinates ({}, {})",
                self.name, self.lat_deg, self.lon_deg
            )));
        }
        if !self.alt_km.is_finite() {
            return Err(Error::InvalidInput(format!("station {:?} altitude not finite", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EciPosition {
    pub x_km: f64,
    pub y_km: f64,
    pub z_km: f64,
    pub t_s: f64,
}

impl EciPosition {
    pub fn new(x_km: f64, y_km: f64, z_km: f64, t_s: f64) -> Self {
        Self { x_km, y_km, z_km, t_s }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x_km, self.y_km, self.z_km]
    }

    pub fn norm(&self) -> f64 {
        norm(self.as_array())
    }
}

pub(crate) fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: [f64; 3]) -> f64 {
    dot(a, a).sqrt()
}

fn sub(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

/// Kepler's third law.
pub fn orbital_period(a_km: f64, mu: f64) -> Result<f64> {
    if !(a_km > 0.0) || !(mu > 0.0) {
        return Err(Error::Domain(format!("orbital_period needs a > 0 and mu > 0, got a={a_km}, mu={mu}")));
    }
    Ok(TAU * (a_km.powi(3) / mu).sqrt())
}

/// Expands a Walker-Star spec into one circular orbit per satellite, cluster-major.
pub fn build_constellation(spec: &ConstellationSpec, earth: &EarthModel) -> Result<Vec<(SatelliteId, OrbitSpec)>> {
    spec.validate()?;
    let a = earth.radius_km + spec.altitude_km;
    let out = spec
        .satellite_ids()
        .into_iter()
        .map(|id| {
            let raan = id.cluster_idx as f64 * spec.raan_spread_rad / spec.n_clusters as f64;
            let anomaly = id.slot_idx as f64 * TAU / spec.sats_per_cluster as f64;
            (id, OrbitSpec::circular(a, spec.inclination_rad, raan, anomaly))
        })
        .collect();
    Ok(out)
}

/// Position on a circular orbit `t_s` seconds after epoch.
pub fn propagate(orbit: &OrbitSpec, t_s: f64, earth: &EarthModel) -> EciPosition {
    let a = orbit.semi_major_axis_km;
    let u = orbit.true_anomaly_epoch_rad + orbit.mean_motion(earth) * t_s;
    let (su, cu) = u.sin_cos();
    let (si, ci) = orbit.inclination_rad.sin_cos();
    let (so, co) = orbit.raan_rad.sin_cos();
    EciPosition::new(
        a * (co * cu - so * ci * su),
        a * (so * cu + co * ci * su),
        a * si * su,
        t_s,
    )
}

/// Spherical-Earth station position, rotated by `gmst0 + omega * t`.
pub fn station_position_eci(gs: &GroundStation, t_s: f64, earth: &EarthModel, gmst0_rad: f64) -> EciPosition {
    let r = earth.radius_km + gs.alt_km;
    let lat = gs.lat_deg.to_radians();
    let theta = gs.lon_deg.to_radians() + gmst0_rad + earth.rotation_rate_rad_s * t_s;
    let (sl, cl) = lat.sin_cos();
    let (st, ct) = theta.sin_cos();
    EciPosition::new(r * cl * ct, r * cl * st, r * sl, t_s)
}

/// Topocentric elevation of `sat` seen from `gs`, using the radial direction as local up.
pub fn elevation_angle(sat: &EciPosition, gs: &EciPosition) -> Result<f64> {
    let g = gs.as_array();
    let gn = norm(g);
    if !(gn > 0.0) {
        return Err(Error::Domain("station position at Earth centre".into()));
    }
    let los = sub(sat.as_array(), g);
    let range = norm(los);
    if !(range > 0.0) {
        return Err(Error::Domain("satellite and station coincide".into()));
    }
    let s = (dot(los, g) / (gn * range)).clamp(-1.0, 1.0);
    Ok(s.asin())
}

/// Line of sight between two satellites clears the Earth plus the grazing margin.
pub fn is_visible_intersat(a: &EciPosition, b: &EciPosition, earth: &EarthModel) -> bool {
    min_segment_distance(a.as_array(), b.as_array()) > earth.radius_km + earth.grazing_margin_km
}

/// Distance from the origin to the closed segment a-b.
fn min_segment_distance(a: [f64; 3], b: [f64; 3]) -> f64 {
    let d = sub(b, a);
    let dd = dot(d, d);
    if dd == 0.0 {
        return norm(a);
    }
    let s = (-dot(a, d) / dd).clamp(0.0, 1.0);
    norm([a[0] + s * d[0], a[1] + s * d[1], a[2] + s * d[2]])
}

/// Earth-central half-angle of the region from which a satellite at radius
/// `sat_radius_km` is above `min_elev_rad` for an observer at `station_radius_km`.
pub fn coverage_half_angle(sat_radius_km: f64, station_radius_km: f64, min_elev_rad: f64) -> f64 {
    let c = (station_radius_km * min_elev_rad.cos() / sat_radius_km).clamp(-1.0, 1.0);
    c.acos() - min_elev_rad
}
