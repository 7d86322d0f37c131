//! Circular-city demand with evenly spaced brands and a symmetric price
//! equilibrium found by damped best response.

use serde::Serialize;

use crate::{NicheError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BorensteinParams {
    pub n_brands: usize,
    /// Reservation price at zero distance.
    pub a: f64,
    /// Reservation-price decline per unit arc distance.
    pub c_strength: f64,
    /// Consumers per unit arc.
    pub l: f64,
    pub fixed_cost: f64,
    pub marginal_cost: f64,
}

impl Default for BorensteinParams {
    fn default() -> Self {
        BorensteinParams {
            n_brands: 4,
            a: 2.0,
            c_strength: 1.0,
            l: 1.0,
            fixed_cost: 0.0,
            marginal_cost: 0.5,
        }
    }
}

impl BorensteinParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_brands < 2 {
            return Err(NicheError::Parameter("need at least two brands".into()));
        }
        if !(self.a > 0.0 && self.c_strength > 0.0 && self.l > 0.0) {
            return Err(NicheError::Parameter("A, c and L must be positive".into()));
        }
        if !(self.fixed_cost >= 0.0 && self.marginal_cost >= 0.0) {
            return Err(NicheError::Parameter("costs must be nonnegative".into()));
        }
        Ok(())
    }

    fn spacing(&self) -> f64 {
        1.0 / self.n_brands as f64
    }
}

/// `A - P - c d`.
pub fn b_consumer_surplus(a: f64, p_x: f64, c: f64, arc_distance: f64) -> f64 {
    a - p_x - c * arc_distance
}

/// Quantity with no neighbour in reach: `2 L d`, `d = (A - P)/c` capped at `1/(2N)`.
pub fn b_monopoly_quantity(params: &BorensteinParams, p_x: f64) -> f64 {
    if p_x > params.a {
        return 0.0;
    }
    let d = ((params.a - p_x) / params.c_strength).min(0.5 * params.spacing());
    2.0 * params.l * d
}

/// Own price at which the two monopoly regions just touch.
pub fn b_kink_price(params: &BorensteinParams, p_y: f64) -> f64 {
    2.0 * params.a - p_y - params.c_strength * params.spacing()
}

/// Split of one inter-brand segment when the market regions touch. A brand
/// undercutting by `c/N` or more takes the whole segment from each neighbour.
pub fn b_competitive_quantity(params: &BorensteinParams, p_x: f64, p_y: f64) -> (f64, f64) {
    let gap = params.c_strength / params.n_brands as f64;
    let full = 2.0 * params.l * params.spacing();
    if p_x <= p_y - gap {
        return (full, 0.0);
    }
    if p_y <= p_x - gap {
        return (0.0, full);
    }
    let q = |own: f64, other: f64| {
        (params.l * (params.spacing() + (other - own) / params.c_strength)).max(0.0)
    };
    (q(p_x, p_y), q(p_y, p_x))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// Regions do not touch; customers trade off the brand against nothing.
    Monopoly,
    /// Regions touch and the boundary consumer is indifferent.
    Competitive,
    /// The brand undercuts its neighbours by at least `c/N`.
    Capture,
    /// Priced out of the market.
    NoSales,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Demand {
    pub quantity: f64,
    pub regime: Regime,
}

/// Demand for brand X when both neighbours charge `p_y`. On each side X sells
/// to the consumers who get nonnegative surplus from X and at least as much as
/// from the neighbour, up to the neighbour's location.
pub fn b_demand(params: &BorensteinParams, p_x: f64, p_y: f64) -> Demand {
    let s = params.spacing();
    let c = params.c_strength;
    let mono = (params.a - p_x) / c;
    let comp = (p_y - p_x + c * s) / (2.0 * c);
    let reach = mono.min(comp).clamp(0.0, s);
    let regime = if reach <= 0.0 {
        Regime::NoSales
    } else if p_x > b_kink_price(params, p_y) {
        Regime::Monopoly
    } else if comp >= s {
        Regime::Capture
    } else {
        Regime::Competitive
    };
    Demand {
        quantity: 2.0 * params.l * reach,
        regime,
    }
}

fn profit(params: &BorensteinParams, p: f64, p_y: f64) -> f64 {
    (p - params.marginal_cost) * b_demand(params, p, p_y).quantity - params.fixed_cost
}

/// Own-price maximiser by golden-section search; profit is unimodal on
/// `[m, max(A, m)]` because demand is concave and decreasing there.
pub fn b_best_response(params: &BorensteinParams, p_y: f64) -> f64 {
    let (mut lo, mut hi) = (params.marginal_cost, params.a.max(params.marginal_cost));
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - r * (hi - lo);
    let mut x2 = lo + r * (hi - lo);
    let (mut f1, mut f2) = (profit(params, x1, p_y), profit(params, x2, p_y));
    while hi - lo > 1e-13 * (1.0 + hi.abs()) {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + r * (hi - lo);
            f2 = profit(params, x2, p_y);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - r * (hi - lo);
            f1 = profit(params, x1, p_y);
        }
    }
    0.5 * (lo + hi)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SegmentEquilibrium {
    pub price: f64,
    pub quantity: f64,
    /// Variable profit `(P - m) q`, before the fixed cost.
    pub margin_profit: f64,
    pub regime: Regime,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BorensteinOutcome {
    pub primary: SegmentEquilibrium,
    pub secondary: Option<SegmentEquilibrium>,
    /// `1 - P_L / P_H` when two segments are priced.
    pub theta_disc: Option<f64>,
    /// Variable profit over all segments less the fixed cost.
    pub profit: f64,
}

/// Discrimination intensity `1 - P_L / P_H`.
pub fn theta_disc(p_low: f64, p_high: f64) -> Result<f64> {
    if !(p_high > 0.0) || p_low < 0.0 || p_low > p_high {
        return Err(NicheError::Parameter(format!(
            "need 0 <= P_L <= P_H with P_H > 0, got P_L={p_low}, P_H={p_high}"
        )));
    }
    Ok(1.0 - p_low / p_high)
}

pub const BR_TOL: f64 = 1e-8;
pub const BR_DAMPING: f64 = 0.5;
pub const BR_MAX_ITER: usize = 10_000;

fn solve_segment(params: &BorensteinParams) -> Result<SegmentEquilibrium> {
    params.validate()?;
    let mut p = 0.5 * (params.marginal_cost + params.a.max(params.marginal_cost));
    let mut trail: Vec<f64> = vec![p];
    for it in 1..=BR_MAX_ITER {
        let next = (1.0 - BR_DAMPING) * p + BR_DAMPING * b_best_response(params, p);
        let moved = (next - p).abs();
        p = next;
        if trail.len() == 10 {
            trail.remove(0);
        }
        trail.push(p);
        if moved < BR_TOL {
            let d = b_demand(params, p, p);
            return Ok(SegmentEquilibrium {
                price: p,
                quantity: d.quantity,
                margin_profit: (p - params.marginal_cost) * d.quantity,
                regime: d.regime,
                iterations: it,
            });
        }
    }
    Err(NicheError::Numeric(format!(
        "best-response iteration did not converge in {BR_MAX_ITER} steps; last prices {trail:?}"
    )))
}

/// Symmetric single-price equilibrium, or two independent segment prices when
/// `second_segment` is given (its fixed cost is ignored; the firm pays
/// `params.fixed_cost` once).
pub fn b_symmetric_equilibrium(
    params: &BorensteinParams,
    second_segment: Option<&BorensteinParams>,
) -> Result<BorensteinOutcome> {
    let primary = solve_segment(params)?;
    let secondary = second_segment.map(solve_segment).transpose()?;
    let theta = match &secondary {
        Some(s) => {
            let (lo, hi) = if s.price <= primary.price {
                (s.price, primary.price)
            } else {
                (primary.price, s.price)
            };
            Some(theta_disc(lo, hi)?)
        }
        None => None,
    };
    let profit = primary.margin_profit + secondary.as_ref().map_or(0.0, |s| s.margin_profit)
        - params.fixed_cost;
    Ok(BorensteinOutcome {
        primary,
        secondary,
        theta_disc: theta,
        profit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(n: usize, a: f64, c: f64, l: f64) -> BorensteinParams {
        BorensteinParams {
            n_brands: n,
            a,
            c_strength: c,
            l,
            fixed_cost: 0.0,
            marginal_cost: 0.0,
        }
    }

    #[test]
    fn surplus_examples() {
        assert_eq!(b_consumer_surplus(3.0, 3.0, 1.0, 0.0), 0.0);
        assert_eq!(b_consumer_surplus(10.0, 4.0, 2.0, 3.0), 0.0);
        assert!(b_consumer_surplus(10.0, 4.0, 2.0, 0.2) > b_consumer_surplus(10.0, 4.0, 2.0, 0.3));
    }

    #[test]
    fn monopoly_examples() {
        let p = params(2, 10.0, 2.0, 1.0);
        assert_eq!(b_monopoly_quantity(&p, 10.0), 0.0);
        assert_eq!(b_monopoly_quantity(&p, 4.0), 0.5);
        assert_eq!(b_monopoly_quantity(&p, 11.0), 0.0);
        let q = b_monopoly_quantity(&params(2, 1.0, 2.0, 1.0), 0.9);
        assert!((q - 0.1).abs() < 1e-12);
    }

    #[test]
    fn kink_examples() {
        let p = params(4, 1.0, 2.0, 1.0);
        assert_eq!(b_kink_price(&p, 1.0), 0.5);
        // symmetric touching price A - c/(2N)
        let sym = p.a - p.c_strength / 8.0;
        assert!((b_kink_price(&p, sym) - sym).abs() < 1e-15);
        assert!((b_kink_price(&p, 1.3) - (b_kink_price(&p, 1.0) - 0.3)).abs() < 1e-15);
    }

    #[test]
    fn competitive_examples() {
        let p = params(4, 5.0, 1.0, 2.0);
        let (qx, qy) = b_competitive_quantity(&p, 1.0, 1.0);
        assert_eq!((qx, qy), (0.5, 0.5));
        let (_, qy) = b_competitive_quantity(&p, 1.0 - 0.25, 1.0);
        assert_eq!(qy, 0.0);
        let (qx, _) = b_competitive_quantity(&p, 0.9, 1.0);
        assert!((qx - 0.7).abs() < 1e-12);
    }

    #[test]
    fn demand_regimes() {
        let p = params(4, 1.0, 2.0, 1.0);
        let kink = b_kink_price(&p, 1.0);
        let far = b_demand(&p, 0.95, 1.0);
        assert_eq!(far.regime, Regime::Monopoly);
        assert!((far.quantity - b_monopoly_quantity(&p, 0.95)).abs() < 1e-15);
        let above = b_demand(&p, kink + 1e-12, 1.0).quantity;
        let below = b_demand(&p, kink - 1e-12, 1.0).quantity;
        assert!((above - below).abs() < 1e-9);
        let q = params(4, 3.0, 1.0, 1.0);
        let eq = b_demand(&q, 1.0, 1.0);
        assert_eq!(eq.regime, Regime::Competitive);
        assert!((eq.quantity - 0.25).abs() < 1e-15);
    }

    #[test]
    fn theta_endpoints() {
        assert_eq!(theta_disc(2.0, 2.0).unwrap(), 0.0);
        assert_eq!(theta_disc(0.0, 2.0).unwrap(), 1.0);
        assert!(theta_disc(3.0, 2.0).is_err());
    }

    #[test]
    fn default_equilibrium_is_competitive() {
        let p = BorensteinParams::default();
        let out = b_symmetric_equilibrium(&p, None).unwrap();
        assert_eq!(out.primary.regime, Regime::Competitive);
        assert!((out.primary.price - 0.75).abs() < 1e-7);
        let h = 1e-6;
        let x = out.primary.price;
        let grad = (profit(&p, x + h, x) - profit(&p, x - h, x)) / (2.0 * h);
        assert!(grad.abs() < 1e-6, "{grad}");
    }

    #[test]
    fn monopoly_equilibrium() {
        // weak reservation price: regions never touch
        let p = BorensteinParams {
            a: 1.0,
            c_strength: 10.0,
            marginal_cost: 0.5,
            ..Default::default()
        };
        let out = b_symmetric_equilibrium(&p, None).unwrap();
        assert_eq!(out.primary.regime, Regime::Monopoly);
        assert!((out.primary.price - 0.75).abs() < 1e-7);
    }
}
