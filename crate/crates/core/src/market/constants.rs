//! Bounds on returns and cost factors, the margin threshold `ν_t`, and the
//! feasibility constants derived from them.

use serde::{Deserialize, Serialize};

use super::{MarketData, MarketError};
use crate::lp::{Cmp, Lp};

/// Observed extremes over the depth-`t` nodes. Return bounds are absent at
/// `t = 0`, where no returns are realized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeBounds {
    pub r_lo: Option<f64>,
    pub r_hi: Option<f64>,
    /// `min Λ⁺`.
    pub cap_lo: f64,
    /// `max Λ⁻`.
    pub cap_hi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeConstants {
    pub t: usize,
    pub mu: f64,
    pub nu: f64,
    pub c1: f64,
    /// Undefined at `t = 0`.
    pub c2: Option<f64>,
    /// Undefined at `t = 0`.
    pub k: Option<f64>,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketConstants {
    pub bounds: Vec<TimeBounds>,
    pub per_time: Vec<TimeConstants>,
}

impl MarketConstants {
    pub fn nu(&self, t: usize) -> f64 {
        self.per_time[t].nu
    }
    pub fn c1(&self, t: usize) -> f64 {
        self.per_time[t].c1
    }
    /// Panics at `t = 0`.
    pub fn c2(&self, t: usize) -> f64 {
        self.per_time[t].c2.expect("C2 is defined for t >= 1")
    }
    /// Panics at `t = 0`.
    pub fn k(&self, t: usize) -> f64 {
        self.per_time[t].k.expect("K is defined for t >= 1")
    }
    pub fn h(&self, t: usize) -> f64 {
        self.per_time[t].h
    }
    pub fn q(&self, t: usize) -> f64 {
        1.0 / self.per_time[t].h
    }
}

pub fn time_bounds(market: &MarketData) -> Vec<TimeBounds> {
    let n = market.horizon();
    let mut out: Vec<TimeBounds> = (0..=n)
        .map(|_| TimeBounds {
            r_lo: None,
            r_hi: None,
            cap_lo: f64::INFINITY,
            cap_hi: f64::NEG_INFINITY,
        })
        .collect();
    for node in 0..market.node_count() {
        let b = &mut out[market.depth(node)];
        for &c in market.cap_plus(node) {
            b.cap_lo = b.cap_lo.min(c);
        }
        for &c in market.cap_minus(node) {
            b.cap_hi = b.cap_hi.max(c);
        }
        if market.parent(node).is_some() {
            for &r in market.returns(node) {
                b.r_lo = Some(b.r_lo.map_or(r, |v: f64| v.min(r)));
                b.r_hi = Some(b.r_hi.map_or(r, |v: f64| v.max(r)));
            }
        }
    }
    out
}

/// `ν_t = max{Λ̄_{t+1}R̄_{t+1}/(Λ̲_{t+1}R̲_{t+1}), Λ̄_t/Λ̲_t}`; the first term is
/// dropped at the horizon.
pub fn nu_values(bounds: &[TimeBounds]) -> Vec<f64> {
    (0..bounds.len())
        .map(|t| {
            let own = bounds[t].cap_hi / bounds[t].cap_lo;
            match bounds.get(t + 1) {
                Some(nb) => {
                    let (lo, hi) = (nb.r_lo.unwrap(), nb.r_hi.unwrap());
                    own.max(nb.cap_hi * hi / (nb.cap_lo * lo))
                }
                None => own,
            }
        })
        .collect()
}

/// Which function is minimized over the section `{a : μ|a₋| ≤ |a₊|, |a| = 1}`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SectionTarget {
    /// `|a₊| − ν|a₋|`, whose minimum is `C¹`.
    Growth { nu: f64 },
    /// `Σ a_i`, whose minimum is `Q = 1/H`.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SectionMethod {
    /// Sign patterns times a barycentric grid, about 10⁵ directions.
    Grid,
    /// One linear program per count of long positions.
    PerPatternLp,
}

impl SectionTarget {
    fn weights(&self) -> (f64, f64) {
        match *self {
            SectionTarget::Growth { nu } => (1.0, nu),
            SectionTarget::Sum => (1.0, 1.0),
        }
    }
}

/// Minimizes the target over the unit-1-norm section of the cost-free margin
/// cone `{μ|a₋| ≤ |a₊|}`. `Grid` is used for `m ≤ 3`, `PerPatternLp` beyond.
pub fn section_minimum(
    mu: f64,
    m: usize,
    target: SectionTarget,
    method: SectionMethod,
) -> Result<f64, MarketError> {
    match method {
        SectionMethod::Grid => Ok(grid_minimum(mu, m, target)),
        SectionMethod::PerPatternLp => lp_minimum(mu, m, target),
    }
}

fn grid_minimum(mu: f64, m: usize, target: SectionTarget) -> f64 {
    let (wp, wn) = target.weights();
    let patterns = 1usize << m;
    // Resolution so that patterns × simplex points is about 1e5.
    let per_pattern = 100_000 / patterns;
    let mut res = 1usize;
    while m > 1 && simplex_count(res + 1, m) <= per_pattern {
        res += 1;
    }
    let eval = |p: f64, n: f64| wp * p - wn * n;
    let mut best = f64::INFINITY;
    let mut w = vec![0usize; m];
    for mask in 0..patterns {
        visit_simplex(&mut w, 0, res, &mut |w| {
            let (mut p, mut n) = (0.0, 0.0);
            for (i, &k) in w.iter().enumerate() {
                let v = k as f64 / res as f64;
                if mask >> i & 1 == 1 {
                    n += v;
                } else {
                    p += v;
                }
            }
            if mu * n <= p {
                best = best.min(eval(p, n));
            } else if p > 0.0 {
                // Slide toward the long part until the margin binds; the
                // section point stays on the unit sphere in the same orthant.
                if let Some(theta) = theta_to_boundary(p, n, mu) {
                    let (pp, nn) = ((1.0 - theta) * p + theta, (1.0 - theta) * n);
                    best = best.min(eval(pp, nn));
                }
            }
        });
    }
    best
}

/// `θ ∈ [0,1]` with `μ(1−θ)n = (1−θ)p + θ`.
fn theta_to_boundary(p: f64, n: f64, mu: f64) -> Option<f64> {
    let denom = mu * n - p + 1.0;
    (denom > 0.0).then(|| ((mu * n - p) / denom).clamp(0.0, 1.0))
}

fn simplex_count(res: usize, m: usize) -> usize {
    // C(res + m − 1, m − 1)
    let mut c = 1usize;
    for i in 1..m {
        c = c * (res + i) / i;
    }
    c
}

fn visit_simplex(w: &mut [usize], i: usize, left: usize, f: &mut impl FnMut(&[usize])) {
    if i + 1 == w.len() {
        w[i] = left;
        f(w);
        return;
    }
    for k in 0..=left {
        w[i] = k;
        visit_simplex(w, i + 1, left - k, f);
    }
}

fn lp_minimum(mu: f64, m: usize, target: SectionTarget) -> Result<f64, MarketError> {
    let (wp, wn) = target.weights();
    let mut best = f64::INFINITY;
    for longs in 1..=m {
        let mut lp = Lp::default();
        let pos: Vec<_> = (0..longs).map(|_| lp.add_var(-wp, 0.0, f64::INFINITY)).collect();
        let neg: Vec<_> = (longs..m).map(|_| lp.add_var(wn, 0.0, f64::INFINITY)).collect();
        let all: Vec<_> = pos.iter().chain(&neg).map(|&v| (v, 1.0)).collect();
        lp.add_row(all, Cmp::Eq, 1.0);
        let margin: Vec<_> = pos
            .iter()
            .map(|&v| (v, 1.0))
            .chain(neg.iter().map(|&v| (v, -mu)))
            .collect();
        lp.add_row(margin, Cmp::Ge, 0.0);
        let (v, _) = lp.maximize()?;
        best = best.min(-v);
    }
    Ok(best)
}

/// `(μ − ν)/(1 + μ)` for `m ≥ 2`; with a single asset the section is `{1}`.
pub fn c1_closed_form(mu: f64, nu: f64, m: usize) -> f64 {
    if m == 1 {
        1.0
    } else {
        (mu - nu) / (1.0 + mu)
    }
}

/// `(μ + 1)/(μ − 1)` for `m ≥ 2`; 1 for a single asset.
pub fn h_closed_form(mu: f64, m: usize) -> f64 {
    if m == 1 {
        1.0
    } else {
        (mu + 1.0) / (mu - 1.0)
    }
}

/// All per-date constants. Fails with `MarginTooTight` at the first date
/// where `μ_t ≤ ν_t`.
pub fn market_constants(market: &MarketData) -> Result<MarketConstants, MarketError> {
    let bounds = time_bounds(market);
    let nus = nu_values(&bounds);
    let m = market.assets();
    let method = if m <= 3 {
        SectionMethod::Grid
    } else {
        SectionMethod::PerPatternLp
    };
    let mut per_time: Vec<TimeConstants> = Vec::with_capacity(bounds.len());
    for (t, &nu) in nus.iter().enumerate() {
        let mu = market.mu(t);
        if mu <= nu {
            return Err(MarketError::MarginTooTight { t, mu, nu });
        }
        let c1 = section_minimum(mu, m, SectionTarget::Growth { nu }, method)?;
        let q = section_minimum(mu, m, SectionTarget::Sum, method)?;
        if !(c1 > 0.0 && q > 0.0) {
            return Err(MarketError::MarginTooTight { t, mu, nu });
        }
        let b = bounds[t];
        let (c2, k) = match (t, b.r_lo, b.r_hi) {
            (1.., Some(r_lo), Some(r_hi)) => (
                Some(per_time[t - 1].c1 * b.cap_lo * r_lo / (2.0 * b.cap_hi)),
                Some(2.0 * b.cap_hi * r_hi / (c1 * b.cap_lo)),
            ),
            _ => (None, None),
        };
        per_time.push(TimeConstants {
            t,
            mu,
            nu,
            c1,
            c2,
            k,
            h: 1.0 / q,
        });
    }
    Ok(MarketConstants { bounds, per_time })
}
