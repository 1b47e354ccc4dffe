//! The inverse Gaussian first-hitting-time law of the molecular diffusion
//! channel: physical channel parameters, density, distribution function,
//! sampling, negative moments, Fisher information, and the CRLB for the
//! timing offset.

use crate::error::{Error, Result};
use crate::numeric::{self, erfcx};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Boltzmann constant (exact SI definition), J/K.
pub const BOLTZMANN_K: f64 = 1.380649e-23;

/// Physical description of the diffusion channel between transmitter and
/// receiver nanomachines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelParams {
    /// Boltzmann constant k, J/K.
    pub boltzmann_k: f64,
    /// Absolute temperature Ta, K.
    pub temperature: f64,
    /// Dynamic viscosity eta of the fluid medium, Pa s.
    pub viscosity: f64,
    /// Radius r of the information molecule, m.
    pub molecule_radius: f64,
    /// Transmitter-receiver distance d, m.
    pub distance: f64,
    /// Drift velocity v toward the receiver, m/s.
    pub drift: f64,
}

impl ChannelParams {
    pub fn new(
        boltzmann_k: f64,
        temperature: f64,
        viscosity: f64,
        molecule_radius: f64,
        distance: f64,
        drift: f64,
    ) -> Result<Self> {
        let fields = [
            ("boltzmann_k", boltzmann_k),
            ("temperature", temperature),
            ("viscosity", viscosity),
            ("molecule_radius", molecule_radius),
            ("distance", distance),
            ("drift", drift),
        ];
        for (name, value) in fields {
            if !(value > 0.0) || !value.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "channel parameter {name} must be positive and finite, got {value}"
                )));
            }
        }
        Ok(ChannelParams {
            boltzmann_k,
            temperature,
            viscosity,
            molecule_radius,
            distance,
            drift,
        })
    }

    /// Einstein-Stokes diffusion coefficient D = kTa / (6 pi eta r), m^2/s.
    pub fn diffusion_coefficient(&self) -> f64 {
        self.boltzmann_k * self.temperature
            / (6.0 * PI * self.viscosity * self.molecule_radius)
    }
}

/// Parameters (mu, lambda) of the inverse Gaussian first-hitting-time law.
/// `mu` is the mean d/v; `lambda = d^2 / (2D)` is the shape.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IgParams {
    mu: f64,
    lambda: f64,
}

impl IgParams {
    pub fn new(mu: f64, lambda: f64) -> Result<Self> {
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "mu must be positive and finite, got {mu}"
            )));
        }
        if !(lambda > 0.0) || !lambda.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "lambda must be positive and finite, got {lambda}"
            )));
        }
        Ok(IgParams { mu, lambda })
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Var[T] = mu^3 / lambda.
    pub fn variance(&self) -> f64 {
        self.mu * self.mu * self.mu / self.lambda
    }

    pub fn std_dev(&self) -> f64 {
        self.variance().sqrt()
    }

    /// Mode of the density: mu * (sqrt(1 + (3mu/2lambda)^2) - 3mu/2lambda).
    pub fn mode(&self) -> f64 {
        let r = 1.5 * self.mu / self.lambda;
        self.mu * ((1.0 + r * r).sqrt() - r)
    }
}

/// Derive the hitting-time law from the physical channel: mu = d/v,
/// lambda = d^2 / (2D) with D the Einstein-Stokes coefficient.
pub fn derive_ig_params(cp: &ChannelParams) -> Result<IgParams> {
    ChannelParams::new(
        cp.boltzmann_k,
        cp.temperature,
        cp.viscosity,
        cp.molecule_radius,
        cp.distance,
        cp.drift,
    )?;
    let d_coef = cp.diffusion_coefficient();
    IgParams::new(cp.distance / cp.drift, cp.distance * cp.distance / (2.0 * d_coef))
}

/// The exponent -lambda (t - mu)^2 / (2 mu^2 t) shared by the density and the
/// overflow-safe distribution function.
fn exponent(t: f64, p: &IgParams) -> f64 {
    let d = t - p.mu;
    -p.lambda * d * d / (2.0 * p.mu * p.mu * t)
}

/// Density of the first-hitting time; total on all reals (0 for t <= 0).
pub fn ig_pdf(t: f64, p: &IgParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    (p.lambda / (2.0 * PI * t * t * t)).sqrt() * exponent(t, p).exp()
}

/// Natural log of the density; -inf for t <= 0.
pub fn ig_ln_pdf(t: f64, p: &IgParams) -> f64 {
    if t <= 0.0 {
        return f64::NEG_INFINITY;
    }
    0.5 * (p.lambda / (2.0 * PI)).ln() - 1.5 * t.ln() + exponent(t, p)
}

/// Distribution function. The textbook form Phi(w) + exp(2 lambda/mu) Phi(-z)
/// overflows for moderate arguments; the second term is evaluated as
/// 0.5 * erfcx(z / sqrt 2) * exp(-lambda (t-mu)^2 / (2 mu^2 t)), which is
/// algebraically identical and stable.
pub fn ig_cdf(t: f64, p: &IgParams) -> f64 {
    if t <= 0.0 {
        return 0.0;
    }
    let s = (p.lambda / t).sqrt();
    let w = s * (t / p.mu - 1.0);
    let z = s * (t / p.mu + 1.0);
    let term1 = 0.5 * libm::erfc(-w / std::f64::consts::SQRT_2);
    let term2 = 0.5 * erfcx(z / std::f64::consts::SQRT_2) * exponent(t, p).exp();
    (term1 + term2).clamp(0.0, 1.0)
}

/// One draw from the hitting-time law by the transformation method: a scaled
/// chi-square of a standard normal gives a root of the quadratic, and a
/// uniform acceptance step picks between the two roots.
pub fn ig_sample<R: Rng + ?Sized>(rng: &mut R, p: &IgParams) -> f64 {
    let v: f64 = rng.sample(StandardNormal);
    let y = p.mu * v * v;
    let x = p.mu + 0.5 * p.mu / p.lambda * (y - (4.0 * p.lambda * y + y * y).sqrt());
    let u: f64 = rng.random();
    if u <= p.mu / (p.mu + x) {
        x
    } else {
        p.mu * p.mu / x
    }
}

/// E[T^-r] in closed form for r in {1, 2, 3}, via the moment reflection
/// E[T^-r] = E[T^(r+1)] / mu^(2r+1).
pub fn ig_negative_moment(r: u32, p: &IgParams) -> Result<f64> {
    let mu = p.mu;
    let la = p.lambda;
    match r {
        1 => Ok(1.0 / mu + 1.0 / la),
        2 => Ok(1.0 / (mu * mu) + 3.0 / (mu * la) + 3.0 / (la * la)),
        3 => Ok(1.0 / (mu * mu * mu)
            + 6.0 / (mu * mu * la)
            + 15.0 / (mu * la * la)
            + 15.0 / (la * la * la)),
        _ => Err(Error::InvalidParameter(format!(
            "negative moment order {r} unsupported, only r in {{1, 2, 3}} has a closed form here"
        ))),
    }
}

/// Upper integration limit for expectations against the density: start at
/// mu + 40 sd and extend until the remaining survival mass is negligible at
/// the 1e-10 tolerance scale used throughout.
pub(crate) fn integration_upper_limit(p: &IgParams) -> f64 {
    let mut hi = p.mu + 40.0 * p.std_dev();
    while 1.0 - ig_cdf(hi, p) > 1e-16 && hi < 1e12 {
        hi *= 2.0;
    }
    hi
}

/// E[g(T)] by adaptive quadrature against the density.
pub fn ig_expectation<F: Fn(f64) -> f64>(g: F, p: &IgParams, abs_tol: f64) -> Result<f64> {
    let hi = integration_upper_limit(p);
    numeric::integrate(
        |t| {
            let d = ig_pdf(t, p);
            // Avoid 0 * inf when g blows up where the density underflows.
            if d == 0.0 {
                0.0
            } else {
                d * g(t)
            }
        },
        0.0,
        hi,
        abs_tol,
    )
}

/// Fisher information of the timing offset carried by a single arrival:
/// I1 = lambda E[T^-3] - 1.5 E[T^-2], from the curvature of the log density.
pub fn fisher_info(p: &IgParams) -> f64 {
    let m2 = ig_negative_moment(2, p).expect("r=2 is supported");
    let m3 = ig_negative_moment(3, p).expect("r=3 is supported");
    p.lambda * m3 - 1.5 * m2
}

/// Fisher information by quadrature of the squared score, used to
/// cross-validate the closed form: E[(1.5/t + lambda/(2 mu^2) - lambda/(2 t^2))^2].
pub fn fisher_info_quadrature(p: &IgParams) -> Result<f64> {
    let mu = p.mu;
    let la = p.lambda;
    ig_expectation(
        |t| {
            let score = -1.5 / t - la / (2.0 * mu * mu) + la / (2.0 * t * t);
            score * score
        },
        p,
        1e-10,
    )
}

/// Cramer-Rao lower bound for the timing offset from n1 pilot arrivals:
/// 1 / (n1 * I1).
pub fn crlb(p: &IgParams, n1: usize) -> Result<f64> {
    if n1 < 1 {
        return Err(Error::InvalidParameter(format!(
            "crlb requires at least one arrival, got n1 = {n1}"
        )));
    }
    Ok(1.0 / fisher_info(p) / n1 as f64)
}
