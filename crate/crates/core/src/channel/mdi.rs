//! Asymptotic key rate of polarization-style MDI-QKD with weak coherent
//! sources, used as the comparison curve.

use serde::{Deserialize, Serialize};

use super::bessel_i0;
use crate::error::{Error, Result};
use crate::protocol::binary_entropy_unchecked;

fn default_background_error() -> f64 {
    0.5
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MdiParams {
    pub mu_a: f64,
    pub mu_b: f64,
    pub eta_a: f64,
    pub eta_b: f64,
    pub dark_count: f64,
    pub misalignment: f64,
    /// Error rate of random clicks.
    #[serde(default = "default_background_error")]
    pub background_error: f64,
}

impl MdiParams {
    /// Symmetric setting: each side sends `mu_total / 2` through `eta`.
    pub fn symmetric(mu_total: f64, eta: f64, dark_count: f64, misalignment: f64) -> Self {
        MdiParams {
            mu_a: mu_total / 2.0,
            mu_b: mu_total / 2.0,
            eta_a: eta,
            eta_b: eta,
            dark_count,
            misalignment,
            background_error: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let vals = [self.mu_a, self.mu_b, self.eta_a, self.eta_b, self.dark_count, self.misalignment];
        if vals.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::invalid("MDI intensities and transmittances must be nonnegative"));
        }
        if !(0.0..=1.0).contains(&self.background_error) {
            return Err(Error::invalid(format!("background error {} outside [0, 1]", self.background_error)));
        }
        Ok(())
    }

    /// Mean photon number reaching the beam splitter.
    pub fn mu_prime(&self) -> f64 {
        self.eta_a * self.mu_a + self.eta_b * self.mu_b
    }

    pub fn x(&self) -> f64 {
        0.5 * (self.eta_a * self.mu_a * self.eta_b * self.mu_b).sqrt()
    }

    pub fn y11(&self) -> f64 {
        let (ea, eb, pd) = (self.eta_a, self.eta_b, self.dark_count);
        (1.0 - pd).powi(2)
            * (ea * eb / 2.0 + (2.0 * ea + 2.0 * eb - 3.0 * ea * eb) * pd + 4.0 * (1.0 - ea) * (1.0 - eb) * pd * pd)
    }

    /// Error-weighted single-photon yield `e₁₁·Y₁₁`.
    pub fn e11_weighted(&self) -> f64 {
        let e0 = self.background_error;
        e0 * self.y11() - (e0 - self.misalignment) * (1.0 - self.dark_count.powi(2)) * self.eta_a * self.eta_b / 2.0
    }

    pub fn q11(&self) -> f64 {
        self.mu_a * self.mu_b * (-self.mu_a - self.mu_b).exp() * self.y11()
    }

    /// `(Q_rect^(C), Q_rect^(E))`.
    pub fn q_rect_parts(&self) -> (f64, f64) {
        let pd = self.dark_count;
        let mp = self.mu_prime();
        let c = 2.0
            * (1.0 - pd).powi(2)
            * (-mp / 2.0).exp()
            * (1.0 - (1.0 - pd) * (-self.eta_a * self.mu_a / 2.0).exp())
            * (1.0 - (1.0 - pd) * (-self.eta_b * self.mu_b / 2.0).exp());
        let e = 2.0 * pd * (1.0 - pd).powi(2) * (-mp / 2.0).exp() * (bessel_i0(2.0 * self.x()) - (1.0 - pd) * (-mp / 2.0).exp());
        (c, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MdiRate {
    pub rate: f64,
    /// `Y₁₁ = 0`: no single-photon pairs are ever detected.
    pub degenerate: bool,
    /// Single-photon error rate `e₁₁/Y₁₁` fed to the entropy.
    pub e11: f64,
    pub q_rect: f64,
    pub e_rect: f64,
}

pub fn key_rate_mdi(p: &MdiParams, f_ec: f64) -> Result<MdiRate> {
    p.validate()?;
    let y11 = p.y11();
    if y11 <= 0.0 {
        return Ok(MdiRate {
            rate: 0.0,
            degenerate: true,
            e11: 0.0,
            q_rect: 0.0,
            e_rect: 0.0,
        });
    }
    let e11 = (p.e11_weighted() / y11).clamp(0.0, 0.5);
    let (qc, qe) = p.q_rect_parts();
    let q_rect = qc + qe;
    let e_rect = if q_rect > 0.0 {
        ((p.misalignment * qc + (1.0 - p.misalignment) * qe) / q_rect).clamp(0.0, 0.5)
    } else {
        0.0
    };
    let r = 0.5 * (p.q11() * (1.0 - binary_entropy_unchecked(e11)) - f_ec * q_rect * binary_entropy_unchecked(e_rect));
    Ok(MdiRate {
        rate: r.max(0.0),
        degenerate: false,
        e11,
        q_rect,
        e_rect,
    })
}
