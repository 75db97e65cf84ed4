//! Rate-versus-distance curves with per-point intensity optimization.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{key_rate_mdi, key_rate_pm_at, plob_bound, tgw_bound, ChannelModel, GroupMisalignment, MdiParams};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveConfig {
    pub loss_db_per_km: f64,
    pub eta_d: f64,
    pub dark_count: f64,
    /// Misalignment of the MDI reference protocol.
    pub misalignment: f64,
    pub f_ec: f64,
    pub slices: usize,
    /// Groups kept by the phase-matching protocol.
    pub groups: Vec<GroupMisalignment>,
}

impl Default for CurveConfig {
    fn default() -> Self {
        CurveConfig {
            loss_db_per_km: 0.2,
            eta_d: 0.23,
            dark_count: 1e-9,
            misalignment: super::DEFAULT_MISALIGNMENT,
            f_ec: 1.1,
            slices: 16,
            groups: vec![GroupMisalignment {
                group: 0,
                misalignment: super::DEFAULT_MISALIGNMENT,
            }],
        }
    }
}

impl CurveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.loss_db_per_km > 0.0) {
            return Err(Error::invalid("fibre loss must be positive"));
        }
        if !(self.f_ec >= 1.0) {
            return Err(Error::invalid(format!("error-correction efficiency {} below 1", self.f_ec)));
        }
        if self.slices < 4 || self.slices % 4 != 0 {
            return Err(Error::invalid(format!("slice count {} must be a positive multiple of 4", self.slices)));
        }
        if let Some(g) = self.groups.iter().find(|g| g.group >= self.slices / 2) {
            return Err(Error::invalid(format!("group {} outside 0..{}", g.group, self.slices / 2)));
        }
        ChannelModel::new(1.0, self.eta_d, self.dark_count, self.misalignment).map(|_| ())
    }

    pub fn default_distances() -> Vec<f64> {
        (0..=60).map(|i| 10.0 * i as f64).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub distance_km: f64,
    pub eta_tot: f64,
    pub r_pm: f64,
    pub r_mdi: f64,
    pub r_plob: f64,
    pub r_tgw: f64,
    pub mu_pm: f64,
    pub mu_mdi: f64,
}

const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// Maximizes `f` over `[lo, hi]`.
///
/// The rate functions vanish on wide plateaus, so the maximum is first
/// bracketed on a logarithmic grid and then refined by golden-section search
/// to relative tolerance `tol`. Returns `(argmax, max)`.
pub fn golden_section_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    assert!(lo > 0.0 && hi > lo, "search interval must be positive and nonempty");
    const GRID: usize = 60;
    let ratio = (hi / lo).ln() / (GRID - 1) as f64;
    let grid: Vec<f64> = (0..GRID).map(|i| lo * (ratio * i as f64).exp()).collect();
    let (best, fbest) = grid
        .iter()
        .map(|&x| f(x))
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, v)| if v > acc.1 { (i, v) } else { acc });
    if fbest <= 0.0 {
        return (grid[best], fbest.max(0.0));
    }
    let mut a = grid[best.saturating_sub(1)];
    let mut b = grid[(best + 1).min(GRID - 1)];
    let mut c = b - GOLDEN * (b - a);
    let mut d = a + GOLDEN * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a) > tol * (a + b) / 2.0 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - GOLDEN * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + GOLDEN * (b - a);
            fd = f(d);
        }
    }
    let x = (a + b) / 2.0;
    let fx = f(x);
    if fx >= fbest {
        (x, fx)
    } else {
        (grid[best], fbest)
    }
}

/// Signal intensity (sum of both sides) maximizing `rate` on `[1e-4, 1]`.
pub fn optimize_intensity<F: Fn(f64) -> f64>(rate: F) -> (f64, f64) {
    golden_section_max(rate, 1e-4, 1.0, 1e-4)
}

fn point(cfg: &CurveConfig, distance_km: f64) -> Result<CurvePoint> {
    let ch = ChannelModel::from_fiber(distance_km, cfg.loss_db_per_km, cfg.eta_d, cfg.dark_count, cfg.misalignment)?;
    let eta_tot = ch.eta_tot();
    let (r_plob, r_tgw) = if eta_tot >= 1.0 {
        (f64::INFINITY, f64::INFINITY)
    } else {
        (plob_bound(eta_tot)?, tgw_bound(eta_tot)?)
    };
    let (mu_pm, r_pm) = optimize_intensity(|mu| key_rate_pm_at(mu, cfg.slices, cfg.f_ec, &ch, &cfg.groups));
    let eta = ch.eta_arm();
    let mdi = |mu: f64| {
        key_rate_mdi(&MdiParams::symmetric(mu, eta, cfg.dark_count, cfg.misalignment), cfg.f_ec)
            .map(|r| r.rate)
            .unwrap_or(0.0)
    };
    let (mu_mdi, r_mdi) = optimize_intensity(mdi);
    Ok(CurvePoint {
        distance_km,
        eta_tot,
        r_pm,
        r_mdi,
        r_plob,
        r_tgw,
        mu_pm,
        mu_mdi,
    })
}

/// Evaluates the curve at every distance, in input order.
pub fn rate_distance_curve(cfg: &CurveConfig, distances_km: &[f64]) -> Result<Vec<CurvePoint>> {
    cfg.validate()?;
    distances_km.par_iter().map(|&l| point(cfg, l)).collect()
}

/// `%g`-style formatting with six significant digits.
fn sig6(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return format!("{x}");
    }
    let exp = x.abs().log10().floor() as i32;
    if (-5..6).contains(&exp) {
        let s = format!("{:.*}", (5 - exp).max(0) as usize, x);
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    } else {
        let s = format!("{x:.5e}");
        let (mant, e) = s.split_once('e').unwrap_or((&s, "0"));
        let mant = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{mant}e{e}")
    }
}

pub fn write_curve_csv<W: Write>(mut out: W, points: &[CurvePoint]) -> std::io::Result<()> {
    writeln!(out, "distance_km,eta_tot,R_pm,R_mdi,R_plob,R_tgw")?;
    for p in points {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            sig6(p.distance_km),
            sig6(p.eta_tot),
            sig6(p.r_pm),
            sig6(p.r_mdi),
            sig6(p.r_plob),
            sig6(p.r_tgw)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn golden_finds_interior_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3).powi(2) + 1.0, 1e-4, 1.0, 1e-6);
        assert!((x - 0.3).abs() < 1e-4);
        assert!((fx - 1.0).abs() < 1e-8);
    }

    #[test]
    fn golden_escapes_zero_plateau() {
        let f = |x: f64| if x < 0.01 { x * (0.01 - x) } else { 0.0 };
        let (x, fx) = golden_section_max(f, 1e-4, 1.0, 1e-5);
        assert!((x - 0.005).abs() < 1e-4, "{x}");
        assert!(fx > 0.0);
    }

    #[test]
    fn sig6_formatting() {
        assert_eq!(sig6(0.0), "0");
        assert_eq!(sig6(10.0), "10");
        assert_eq!(sig6(0.1234567), "0.123457");
        assert_eq!(sig6(3.77e-7), "3.77e-7");
        assert_eq!(sig6(123456789.0), "1.23457e8");
        assert_eq!(sig6(f64::INFINITY), "inf");
    }

    #[test]
    fn curve_is_ordered_and_bounds_decrease() {
        let cfg = CurveConfig::default();
        let d = [0.0, 100.0, 50.0, 300.0];
        let pts = rate_distance_curve(&cfg, &d).unwrap();
        assert_eq!(pts.iter().map(|p| p.distance_km).collect::<Vec<_>>(), d);
        assert!(pts[0].r_plob > 0.0 && pts[1].r_plob < pts[2].r_plob);
        assert!(pts.iter().all(|p| p.r_tgw >= p.r_plob));
    }

    #[test]
    fn csv_header_and_rows() {
        let pts = rate_distance_curve(&CurveConfig::default(), &[100.0, 200.0]).unwrap();
        let mut buf = Vec::new();
        write_curve_csv(&mut buf, &pts).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "distance_km,eta_tot,R_pm,R_mdi,R_plob,R_tgw");
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("100,0.0023,"), "{}", lines[1]);
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = CurveConfig::default();
        cfg.f_ec = 0.9;
        assert!(rate_distance_curve(&cfg, &[10.0]).is_err());
        let mut cfg = CurveConfig::default();
        cfg.groups[0].group = 8;
        assert!(rate_distance_curve(&cfg, &[10.0]).is_err());
    }
}
