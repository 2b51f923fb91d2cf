//! Window search by coarse sampling plus bisection.
//!
//! Ground passes are found by sampling elevation every `coarse_step_s` and
//! bisecting each mask crossing to `refine_tol_s`. Samples whose elevation forms a
//! local maximum just below the mask trigger a golden-section search for the
//! true peak, so passes shorter than one coarse step are still reported. Far from
//! the visibility cone the sampler jumps ahead by the time the satellite needs to
//! close the angular gap at the maximum relative rate.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orbital::{
    coverage_half_angle, dot, elevation_angle, is_visible_intersat, propagate, station_position_eci,
    EarthModel, GroundStation, OrbitSpec, SatelliteId,
};

use super::{AccessWindow, ContactTimeline, Counterpart};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScanConfig {
    pub min_elev_rad: f64,
    pub coarse_step_s: f64,
    pub refine_tol_s: f64,
    pub earth: EarthModel,
    pub gmst0_rad: f64,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            min_elev_rad: 10f64.to_radians(),
            coarse_step_s: 10.0,
            refine_tol_s: 0.1,
            earth: EarthModel::default(),
            gmst0_rad: 0.0,
        }
    }
}

impl ScanConfig {
    fn validate(&self) -> Result<()> {
        if !(self.coarse_step_s > 0.0) || !(self.refine_tol_s > 0.0) {
            return Err(Error::InvalidInput(format!(
                "coarse step and refine tolerance must be positive: {} / {}",
                self.coarse_step_s, self.refine_tol_s
            )));
        }
        self.earth.validate()
    }

    fn mask_for(&self, gs: &GroundStation) -> f64 {
        gs.min_elev_deg.map_or(self.min_elev_rad, f64::to_radians)
    }
}

/// Peaks more than this far below the mask are not worth a golden-section search.
const PEAK_SEARCH_BAND_RAD: f64 = 0.05;

/// Every maximal interval within `horizon` where the satellite is at or above the
/// elevation mask of `gs`, in time order.
pub fn scan_windows(
    sat: SatelliteId,
    orbit: &OrbitSpec,
    gs: &GroundStation,
    station_idx: usize,
    horizon: (f64, f64),
    cfg: &ScanConfig,
) -> Result<Vec<AccessWindow>> {
    cfg.validate()?;
    let (t0, t1) = horizon;
    if !(t0 < t1) {
        return Ok(Vec::new());
    }
    let earth = &cfg.earth;
    let mask = cfg.mask_for(gs);
    let elev = |t: f64| -> f64 {
        let s = propagate(orbit, t, earth);
        let g = station_position_eci(gs, t, earth, cfg.gmst0_rad);
        elevation_angle(&s, &g).unwrap_or(-std::f64::consts::FRAC_PI_2)
    };
    let central_angle = |t: f64| -> f64 {
        let s = propagate(orbit, t, earth).as_array();
        let g = station_position_eci(gs, t, earth, cfg.gmst0_rad).as_array();
        let c = dot(s, g) / (orbit.semi_major_axis_km * (earth.radius_km + gs.alt_km));
        c.clamp(-1.0, 1.0).acos()
    };
    let cone = coverage_half_angle(orbit.semi_major_axis_km, earth.radius_km + gs.alt_km, mask);
    let max_rate = orbit.mean_motion(earth) + earth.rotation_rate_rad_s;
    let step = cfg.coarse_step_s;
    let tol = cfg.refine_tol_s;

    let push = |out: &mut Vec<AccessWindow>, a: f64, b: f64| {
        if b > a {
            out.push(AccessWindow {
                sat,
                counterpart: Counterpart::Station(station_idx),
                start_s: a,
                end_s: b,
            });
        }
    };

    let mut out = Vec::new();
    let mut t = t0;
    let mut e = elev(t);
    let mut open: Option<f64> = (e >= mask).then_some(t0);
    // Sample preceding (t, e), used to spot local maxima below the mask.
    let mut prev: Option<(f64, f64)> = None;

    while t < t1 {
        if open.is_none() {
            let gap = central_angle(t) - cone;
            let jump = gap / max_rate - 2.0 * step;
            if jump > step {
                // The angular gap cannot close faster than max_rate, so the new
                // sample is still at least two steps outside the cone.
                t = (t + jump).min(t1);
                e = elev(t);
                debug_assert!(e < mask);
                prev = None;
                continue;
            }
        }
        let tn = (t + step).min(t1);
        let en = elev(tn);
        match (open, en >= mask) {
            (None, true) => open = Some(bisect(&elev, mask, t, tn, tol, true)),
            (Some(start), false) => {
                push(&mut out, start, bisect(&elev, mask, t, tn, tol, false));
                open = None;
            }
            (None, false) => {
                if let Some((ta, ea)) = prev {
                    if e >= ea && e >= en && e > mask - PEAK_SEARCH_BAND_RAD {
                        let (tp, ep) = golden_max(&elev, ta, tn, tol / 4.0);
                        if ep >= mask {
                            let rise = bisect(&elev, mask, ta, tp, tol, true);
                            let set = bisect(&elev, mask, tp, tn, tol, false);
                            push(&mut out, rise, set);
                        }
                    }
                }
            }
            (Some(_), true) => {}
        }
        prev = Some((t, e));
        t = tn;
        e = en;
    }
    if let Some(start) = open {
        push(&mut out, start, t1);
    }
    Ok(out)
}

/// Locates the mask crossing inside `[lo, hi]`. For a rising edge returns the
/// first visible bracket end, for a setting edge the last visible one.
fn bisect(f: &impl Fn(f64) -> f64, level: f64, mut lo: f64, mut hi: f64, tol: f64, rising: bool) -> f64 {
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        let above = f(mid) >= level;
        if above == rising {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    if rising {
        hi
    } else {
        lo
    }
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    let t = 0.5 * (a + b);
    (t, f(t))
}

/// Maximal intervals during which two satellites have line of sight.
pub fn scan_intersat_windows(
    a: (SatelliteId, &OrbitSpec),
    b: (SatelliteId, &OrbitSpec),
    horizon: (f64, f64),
    cfg: &ScanConfig,
) -> Result<Vec<AccessWindow>> {
    cfg.validate()?;
    if a.0 == b.0 || a.1 == b.1 {
        return Err(Error::InvalidInput(format!("cannot link satellite {} with itself", a.0)));
    }
    let (t0, t1) = horizon;
    if !(t0 < t1) {
        return Ok(Vec::new());
    }
    let (lo, hi) = if a.0 < b.0 { (a, b) } else { (b, a) };
    let earth = &cfg.earth;
    let los = |t: f64| -> f64 {
        let visible = is_visible_intersat(&propagate(lo.1, t, earth), &propagate(hi.1, t, earth), earth);
        if visible {
            1.0
        } else {
            0.0
        }
    };
    let mut out = Vec::new();
    let mut push = |s: f64, e: f64| {
        if e > s {
            out.push(AccessWindow {
                sat: lo.0,
                counterpart: Counterpart::Satellite(hi.0),
                start_s: s,
                end_s: e,
            });
        }
    };
    let mut t = t0;
    let mut open = (los(t0) > 0.5).then_some(t0);
    while t < t1 {
        let tn = (t + cfg.coarse_step_s).min(t1);
        let vis = los(tn) > 0.5;
        match (open, vis) {
            (None, true) => open = Some(bisect(&los, 0.5, t, tn, cfg.refine_tol_s, true)),
            (Some(s), false) => {
                push(s, bisect(&los, 0.5, t, tn, cfg.refine_tol_s, false));
                open = None;
            }
            _ => {}
        }
        t = tn;
    }
    if let Some(s) = open {
        push(s, t1);
    }
    Ok(out)
}

/// Adjacent same-cluster pairs of a ring with `sats_per_cluster` slots, each pair once.
pub fn ring_neighbors(cluster: usize, sats_per_cluster: usize) -> Vec<(SatelliteId, SatelliteId)> {
    match sats_per_cluster {
        0 | 1 => Vec::new(),
        2 => vec![(SatelliteId::new(cluster, 0), SatelliteId::new(cluster, 1))],
        n => (0..n)
            .map(|q| {
                let (a, b) = (q, (q + 1) % n);
                let (a, b) = (a.min(b), a.max(b));
                (SatelliteId::new(cluster, a), SatelliteId::new(cluster, b))
            })
            .collect(),
    }
}

/// Scans every (satellite, station) pair, and when `links` is set every adjacent
/// intra-cluster pair, in parallel.
pub fn plan_contacts(
    sats: &[(SatelliteId, OrbitSpec)],
    stations: &[GroundStation],
    horizon: (f64, f64),
    cfg: &ScanConfig,
    links: bool,
) -> Result<ContactTimeline> {
    let pairs: Vec<(usize, usize)> = (0..sats.len())
        .flat_map(|i| (0..stations.len()).map(move |j| (i, j)))
        .collect();
    let ground: Vec<Vec<AccessWindow>> = pairs
        .par_iter()
        .map(|&(i, j)| scan_windows(sats[i].0, &sats[i].1, &stations[j], j, horizon, cfg))
        .collect::<Result<_>>()?;
    let mut windows: Vec<AccessWindow> = ground.into_iter().flatten().collect();

    if links {
        let clusters: std::collections::BTreeSet<usize> = sats.iter().map(|(id, _)| id.cluster_idx).collect();
        let lookup = |id: SatelliteId| sats.iter().find(|(s, _)| *s == id).map(|(_, o)| o);
        let mut link_pairs = Vec::new();
        for c in clusters {
            let size = sats.iter().filter(|(id, _)| id.cluster_idx == c).count();
            for (a, b) in ring_neighbors(c, size) {
                if let (Some(oa), Some(ob)) = (lookup(a), lookup(b)) {
                    link_pairs.push(((a, *oa), (b, *ob)));
                }
            }
        }
        let found: Vec<Vec<AccessWindow>> = link_pairs
            .par_iter()
            .map(|((a, oa), (b, ob))| scan_intersat_windows((*a, oa), (*b, ob), horizon, cfg))
            .collect::<Result<_>>()?;
        windows.extend(found.into_iter().flatten());
    }
    ContactTimeline::new(stations.iter().map(|s| s.name.clone()).collect(), horizon, windows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::{build_constellation, builtin_catalog, ConstellationSpec};
    use std::f64::consts::{PI, TAU};

    fn polar(anomaly: f64, raan: f64) -> OrbitSpec {
        OrbitSpec::circular(6871.0, PI / 2.0, raan, anomaly)
    }

    #[test]
    fn tromso_sees_polar_orbit_every_revolution() {
        let cat = builtin_catalog();
        let tromso = cat.iter().position(|g| g.name == "Tromso").unwrap();
        let o = polar(0.0, 0.3);
        let cfg = ScanConfig::default();
        let ws = scan_windows(SatelliteId::new(0, 0), &o, &cat[tromso], tromso, (0.0, 86_400.0), &cfg).unwrap();
        let revs = 86_400.0 / o.period_s(&cfg.earth);
        // A 69.65N station misses at most a few revolutions per day.
        assert!(ws.len() as f64 >= revs * 0.5, "{} windows over {revs:.1} revolutions", ws.len());
        for w in &ws {
            assert!(w.duration_s() <= 7.5 * 60.0, "{w}");
        }
    }

    #[test]
    fn no_pass_within_short_horizon() {
        // Equatorial station, polar orbit whose ground track starts on the far side.
        let gs = GroundStation::new("eq", 0.0, 0.0).unwrap();
        let o = polar(PI, 0.0);
        let ws = scan_windows(SatelliteId::new(0, 0), &o, &gs, 0, (0.0, 1200.0), &ScanConfig::default()).unwrap();
        assert!(ws.is_empty());
    }

    #[test]
    fn degenerate_horizon_is_empty() {
        let gs = GroundStation::new("eq", 0.0, 0.0).unwrap();
        let ws = scan_windows(SatelliteId::new(0, 0), &polar(0.0, 0.0), &gs, 0, (10.0, 10.0), &ScanConfig::default());
        assert!(ws.unwrap().is_empty());
    }

    #[test]
    fn window_open_at_horizon_start() {
        let gs = GroundStation::new("eq", 0.0, 0.0).unwrap();
        // Directly overhead at t = 0.
        let ws = scan_windows(SatelliteId::new(0, 0), &polar(0.0, 0.0), &gs, 0, (0.0, 3000.0), &ScanConfig::default()).unwrap();
        assert_eq!(ws[0].start_s, 0.0);
        assert!(ws[0].end_s > 100.0);
    }

    #[test]
    fn rejects_non_positive_step() {
        let gs = GroundStation::new("eq", 0.0, 0.0).unwrap();
        let cfg = ScanConfig {
            coarse_step_s: 0.0,
            ..ScanConfig::default()
        };
        assert!(scan_windows(SatelliteId::new(0, 0), &polar(0.0, 0.0), &gs, 0, (0.0, 10.0), &cfg).is_err());
    }

    fn ring_pair_windows(n: usize) -> Vec<AccessWindow> {
        let cfg = ScanConfig::default();
        let a = polar(0.0, 0.0);
        let b = polar(TAU / n as f64, 0.0);
        scan_intersat_windows((SatelliteId::new(0, 0), &a), (SatelliteId::new(0, 1), &b), (0.0, 20_000.0), &cfg).unwrap()
    }

    #[test]
    fn ten_sat_ring_link_spans_horizon() {
        let ws = ring_pair_windows(10);
        assert_eq!(ws.len(), 1);
        assert_eq!((ws[0].start_s, ws[0].end_s), (0.0, 20_000.0));
    }

    #[test]
    fn eight_sat_ring_has_no_link() {
        assert!(ring_pair_windows(8).is_empty());
    }

    #[test]
    fn self_link_is_rejected() {
        let o = polar(0.0, 0.0);
        let id = SatelliteId::new(0, 0);
        let r = scan_intersat_windows((id, &o), (id, &o), (0.0, 10.0), &ScanConfig::default());
        assert!(r.is_err());
    }

    #[test]
    fn ring_neighbor_counts() {
        assert!(ring_neighbors(0, 1).is_empty());
        assert_eq!(ring_neighbors(0, 2).len(), 1);
        assert_eq!(ring_neighbors(3, 10).len(), 10);
        assert!(ring_neighbors(3, 10).iter().all(|(a, b)| a < b && a.cluster_idx == 3));
    }

    #[test]
    fn plan_covers_every_pair() {
        let earth = EarthModel::default();
        let sats = build_constellation(&ConstellationSpec::walker_star(2, 10), &earth).unwrap();
        let stations = builtin_catalog()[..3].to_vec();
        let tl = plan_contacts(&sats, &stations, (0.0, 6.0 * 3600.0), &ScanConfig::default(), true).unwrap();
        assert_eq!(tl.stations().len(), 3);
        assert_eq!(tl.link_pairs().count(), 20);
        for (a, b) in tl.link_pairs() {
            let ws = tl.link_windows(a, b);
            assert_eq!(ws.len(), 1);
            assert_eq!(ws[0].duration_s(), 6.0 * 3600.0);
        }
        assert!(sats.iter().any(|(id, _)| !tl.ground_windows(*id).is_empty()));
    }
}
