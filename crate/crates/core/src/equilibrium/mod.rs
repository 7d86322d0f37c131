//! Pricing equilibria: the two-firm loyalty game and circular-city demand.

mod borenstein;
mod shaffer_zhang;

pub use borenstein::*;
pub use shaffer_zhang::*;

use serde::Serialize;

use crate::Result;

/// One closed-form equilibrium with its grid-search certificate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SzSweepRow {
    pub params: SzParams,
    pub prices: SzPrices,
    pub profits: (f64, f64),
    pub theta_gradient: Option<(f64, f64)>,
    pub certified: bool,
    pub best_gain: f64,
}

/// Evaluates and certifies the closed form matching `params.discrimination`.
pub fn sz_solve(params: &SzParams, grid: &NashGrid) -> Result<SzSweepRow> {
    let (prices, profits) = if params.discrimination {
        sz_discrimination_equilibrium(params)?
    } else {
        sz_benchmark_equilibrium(params)?
    };
    let report = sz_verify_nash(params, &prices, grid)?;
    Ok(SzSweepRow {
        params: *params,
        prices,
        profits,
        theta_gradient: if params.discrimination {
            Some(sz_profit_theta_gradient(params)?)
        } else {
            None
        },
        certified: report.certified,
        best_gain: report.best_a.gain.max(report.best_b.gain),
    })
}

/// Default certification grid: theta in {0.5, 0.6, 0.75, 0.9, 1}, l_alpha in
/// {1, 2}, c in {0, 0.5}. The benchmark uses l_beta = l_alpha, since at
/// theta = 1/2 any other ratio admits a profitable deviation; the
/// discriminating game adds l_beta / l_alpha in {0.5, 2}.
pub fn default_sz_grid(discrimination: bool) -> Vec<SzParams> {
    let ratios: &[f64] = if discrimination {
        &[0.5, 1.0, 2.0]
    } else {
        &[1.0]
    };
    let mut out = Vec::new();
    for &theta in &[0.5, 0.6, 0.75, 0.9, 1.0] {
        for &l_alpha in &[1.0, 2.0] {
            for &c in &[0.0, 0.5] {
                for &ratio in ratios {
                    out.push(SzParams {
                        theta,
                        l_alpha,
                        l_beta: ratio * l_alpha,
                        c,
                        discrimination,
                    });
                }
            }
        }
    }
    out
}
