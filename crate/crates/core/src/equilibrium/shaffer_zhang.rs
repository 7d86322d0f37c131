//! Two-firm loyalty game with and without group price discrimination.

use rayon::prelude::*;
use serde::Serialize;

use crate::{NicheError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SzParams {
    /// Firm A's share at equal prices, in [1/2, 1].
    pub theta: f64,
    pub l_alpha: f64,
    pub l_beta: f64,
    pub c: f64,
    pub discrimination: bool,
}

impl SzParams {
    pub fn new(
        theta: f64,
        l_alpha: f64,
        l_beta: f64,
        c: f64,
        discrimination: bool,
    ) -> Result<Self> {
        let p = SzParams {
            theta,
            l_alpha,
            l_beta,
            c,
            discrimination,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.5..=1.0).contains(&self.theta) {
            return Err(NicheError::Domain(format!(
                "theta {} outside [0.5, 1]",
                self.theta
            )));
        }
        if !(self.l_alpha > 0.0 && self.l_beta > 0.0) {
            return Err(NicheError::Parameter(
                "loyalty maxima must be positive".into(),
            ));
        }
        if !(self.c >= 0.0) {
            return Err(NicheError::Parameter(
                "marginal cost must be nonnegative".into(),
            ));
        }
        Ok(())
    }
}

/// Prices charged to groups alpha and beta (tilde) by each firm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SzPrices {
    pub p_a: f64,
    pub p_tilde_a: f64,
    pub p_b: f64,
    pub p_tilde_b: f64,
}

impl SzPrices {
    pub fn uniform(p_a: f64, p_b: f64) -> Self {
        SzPrices {
            p_a,
            p_tilde_a: p_a,
            p_b,
            p_tilde_b: p_b,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Group {
    Alpha,
    Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Choice {
    Stay,
    Switch,
}

/// Uniform loyalty CDF on `[0, l_k]`.
pub fn sz_loyalty_cdf(x: f64, l_k: f64) -> f64 {
    if x < 0.0 {
        0.0
    } else if x <= l_k {
        x / l_k
    } else {
        1.0
    }
}

/// A consumer stays unless the home firm's premium exceeds their loyalty.
pub fn sz_switch_decision(prices: &SzPrices, loyalty: f64, group: Group) -> Choice {
    let stays = match group {
        Group::Alpha => prices.p_a <= prices.p_b + loyalty,
        Group::Beta => prices.p_tilde_b <= prices.p_tilde_a + loyalty,
    };
    if stays {
        Choice::Stay
    } else {
        Choice::Switch
    }
}

pub fn sz_profits(params: &SzParams, prices: &SzPrices) -> (f64, f64) {
    let SzParams {
        theta,
        l_alpha,
        l_beta,
        c,
        ..
    } = *params;
    let f_alpha = sz_loyalty_cdf(prices.p_a - prices.p_b, l_alpha);
    let f_beta = sz_loyalty_cdf(prices.p_tilde_b - prices.p_tilde_a, l_beta);
    let pi_a = theta * (prices.p_a - c) * (1.0 - f_alpha)
        + (1.0 - theta) * (prices.p_tilde_a - c) * f_beta;
    let pi_b = theta * (prices.p_b - c) * f_alpha
        + (1.0 - theta) * (prices.p_tilde_b - c) * (1.0 - f_beta);
    (pi_a, pi_b)
}

/// Uniform-price equilibrium: `P_A = (1+theta)/(3 theta) l_alpha + c`,
/// `P_B = (2-theta)/(3 theta) l_alpha + c`.
pub fn sz_benchmark_equilibrium(params: &SzParams) -> Result<(SzPrices, (f64, f64))> {
    params.validate()?;
    if params.discrimination {
        return Err(NicheError::Parameter(
            "benchmark game requires discrimination = false".into(),
        ));
    }
    let SzParams {
        theta, l_alpha, c, ..
    } = *params;
    let prices = SzPrices::uniform(
        (1.0 + theta) / (3.0 * theta) * l_alpha + c,
        (2.0 - theta) / (3.0 * theta) * l_alpha + c,
    );
    let profits = (
        (1.0 + theta).powi(2) / (9.0 * theta) * l_alpha,
        (2.0 - theta).powi(2) / (9.0 * theta) * l_alpha,
    );
    Ok((prices, profits))
}

/// Discriminating equilibrium; prices do not depend on theta.
pub fn sz_discrimination_equilibrium(params: &SzParams) -> Result<(SzPrices, (f64, f64))> {
    params.validate()?;
    if !params.discrimination {
        return Err(NicheError::Parameter(
            "discrimination game requires discrimination = true".into(),
        ));
    }
    let SzParams {
        theta,
        l_alpha,
        l_beta,
        c,
        ..
    } = *params;
    let prices = SzPrices {
        p_a: 2.0 / 3.0 * l_alpha + c,
        p_tilde_a: l_beta / 3.0 + c,
        p_b: l_alpha / 3.0 + c,
        p_tilde_b: 2.0 / 3.0 * l_beta + c,
    };
    let profits = (
        4.0 / 9.0 * theta * l_alpha + (1.0 - theta) * l_beta / 9.0,
        theta * l_alpha / 9.0 + 4.0 / 9.0 * (1.0 - theta) * l_beta,
    );
    Ok((prices, profits))
}

/// Derivatives of the discriminating equilibrium profits in theta.
pub fn sz_profit_theta_gradient(params: &SzParams) -> Result<(f64, f64)> {
    params.validate()?;
    if !params.discrimination {
        return Err(NicheError::Parameter(
            "gradient is defined for the discrimination game".into(),
        ));
    }
    Ok((
        4.0 / 9.0 * params.l_alpha - params.l_beta / 9.0,
        params.l_alpha / 9.0 - 4.0 / 9.0 * params.l_beta,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NashGrid {
    /// Deviations span `p (1 - range) ..= p (1 + range)`.
    pub range: f64,
    pub step: f64,
    pub threshold: f64,
}

impl Default for NashGrid {
    fn default() -> Self {
        NashGrid {
            range: 0.5,
            step: 1e-3,
            threshold: 1e-9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub firm: char,
    pub prices: SzPrices,
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NashReport {
    pub certified: bool,
    /// Most profitable deviation found for each firm.
    pub best_a: Deviation,
    pub best_b: Deviation,
    pub evaluations: usize,
}

impl NashReport {
    pub fn violations(&self) -> Vec<&Deviation> {
        [&self.best_a, &self.best_b]
            .into_iter()
            .filter(|d| d.gain > 0.0 && !self.certified)
            .collect()
    }
}

fn factors(grid: &NashGrid) -> Vec<f64> {
    let steps = (grid.range / grid.step).round() as i64;
    (-steps..=steps)
        .map(|i| 1.0 + i as f64 * grid.step)
        .collect()
}

fn best_deviation(
    params: &SzParams,
    base: &SzPrices,
    firm: char,
    grid: &NashGrid,
) -> (Deviation, usize) {
    let f = factors(grid);
    let (own, own_tilde) = match firm {
        'A' => (base.p_a, base.p_tilde_a),
        _ => (base.p_b, base.p_tilde_b),
    };
    let profit = |p: &SzPrices| {
        let (a, b) = sz_profits(params, p);
        if firm == 'A' {
            a
        } else {
            b
        }
    };
    let baseline = profit(base);
    let candidates: Vec<(f64, f64)> = if params.discrimination {
        f.iter()
            .flat_map(|&x| f.iter().map(move |&y| (own * x, own_tilde * y)))
            .collect()
    } else {
        f.iter().map(|&x| (own * x, own * x)).collect()
    };
    let evaluations = candidates.len();
    let best = candidates
        .par_iter()
        .map(|&(p, pt)| {
            let mut dev = *base;
            if firm == 'A' {
                dev.p_a = p;
                dev.p_tilde_a = pt;
            } else {
                dev.p_b = p;
                dev.p_tilde_b = pt;
            }
            Deviation {
                firm,
                prices: dev,
                gain: profit(&dev) - baseline,
            }
        })
        .reduce_with(|a, b| if b.gain > a.gain { b } else { a })
        .expect("grid is nonempty");
    (best, evaluations)
}

/// Grid search over unilateral deviations. Uniform-price deviations only in
/// the benchmark game; both group prices jointly when discriminating.
pub fn sz_verify_nash(params: &SzParams, prices: &SzPrices, grid: &NashGrid) -> Result<NashReport> {
    params.validate()?;
    if !(grid.step > 0.0 && grid.range >= 0.0 && grid.range < 1.0) {
        return Err(NicheError::Parameter(
            "deviation grid needs step > 0 and range in [0, 1)".into(),
        ));
    }
    let (best_a, ea) = best_deviation(params, prices, 'A', grid);
    let (best_b, eb) = best_deviation(params, prices, 'B', grid);
    Ok(NashReport {
        certified: best_a.gain <= grid.threshold && best_b.gain <= grid.threshold,
        best_a,
        best_b,
        evaluations: ea + eb,
    })
}
