//! Margin-constrained revenue maximization over linear demand curves.
//!
//! Each product's price is confined to the box implied by its margin bounds
//! (and by the point where predicted demand reaches zero). The revenue-weighted
//! overall margin couples the products; it is handled with a quadratic
//! penalty whose weight doubles while the constraint is violated. Several
//! random starts run projected gradient ascent and the best feasible result
//! wins.

mod io;

pub use io::{read_problem_csv, write_solution_csv};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ml::DemandTheta;

pub const DEFAULT_STARTS: usize = 32;
/// Tolerance of the reported feasibility check.
pub const FEASIBILITY_TOL: f64 = 1e-9;
/// Largest problem the exhaustive grid accepts.
pub const GRID_MAX_PRODUCTS: usize = 4;

const PENALTY_ROUNDS: usize = 10;
const MAX_ITERATIONS: usize = 5_000;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProductTerms {
    pub product_id: u32,
    pub theta: DemandTheta,
    pub cost: f64,
    pub margin_lb: f64,
    pub margin_ub: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingProblem {
    pub products: Vec<ProductTerms>,
    /// Floor on `sum((p - c) D) / sum(p D)`.
    pub margin_target: Option<f64>,
    pub price_cap: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PricingSolution {
    pub prices: Vec<f64>,
    pub revenue: f64,
    pub overall_margin: Option<f64>,
    pub product_margins: Vec<f64>,
    pub feasible: bool,
    /// Index of the winning start; `None` for the grid oracle.
    pub start: Option<usize>,
}

/// Sum of `p_i * max(0, alpha_i + beta_i p_i)`.
pub fn revenue(prices: &[f64], thetas: &[DemandTheta]) -> f64 {
    prices
        .iter()
        .zip(thetas)
        .map(|(&p, t)| p * t.demand(p).max(0.0))
        .sum()
}

#[derive(Clone, Debug, PartialEq)]
pub struct MarginReport {
    /// `None` when total revenue is zero.
    pub overall: Option<f64>,
    pub per_product: Vec<f64>,
    pub feasible: bool,
}

/// Recomputes every constraint at `prices` from scratch.
pub fn margin_constraints(prices: &[f64], problem: &PricingProblem) -> Result<MarginReport> {
    let n = problem.products.len();
    if prices.len() != n {
        return Err(Error::dims("prices", n, prices.len()));
    }
    let (mut num, mut den) = (0.0, 0.0);
    let mut per_product = Vec::with_capacity(n);
    let mut feasible = true;
    for (&p, t) in prices.iter().zip(&problem.products) {
        let d = t.theta.demand(p).max(0.0);
        num += (p - t.cost) * d;
        den += p * d;
        let m = (p - t.cost) / p;
        per_product.push(m);
        feasible &= m >= t.margin_lb - FEASIBILITY_TOL && m <= t.margin_ub + FEASIBILITY_TOL;
        if let Some(cap) = problem.price_cap {
            feasible &= p <= cap * (1.0 + FEASIBILITY_TOL);
        }
    }
    let overall = (den > 0.0).then(|| num / den);
    feasible &= match (overall, problem.margin_target) {
        (None, _) => false,
        (Some(m), Some(target)) => m >= target - FEASIBILITY_TOL,
        (Some(_), None) => true,
    };
    Ok(MarginReport {
        overall,
        per_product,
        feasible,
    })
}

impl PricingProblem {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.products.is_empty() {
            return Err(Error::EmptyInput("pricing problem"));
        }
        for t in &self.products {
            let id = t.product_id;
            if !(t.cost > 0.0 && t.cost.is_finite()) {
                return bad(format!("product {id}: cost must be positive"));
            }
            if !(0.0 <= t.margin_lb && t.margin_lb <= t.margin_ub && t.margin_ub < 1.0) {
                return bad(format!(
                    "product {id}: margin bounds need 0 <= lb <= ub < 1"
                ));
            }
            if !(t.theta.alpha.is_finite() && t.theta.beta.is_finite()) {
                return bad(format!("product {id}: demand parameters must be finite"));
            }
        }
        if let Some(target) = self.margin_target {
            if !(target < 1.0) {
                return bad("margin target must be below 1".into());
            }
        }
        if let Some(cap) = self.price_cap {
            if !(cap > 0.0) {
                return bad("price cap must be positive".into());
            }
        }
        Ok(())
    }

    fn thetas(&self) -> Vec<DemandTheta> {
        self.products.iter().map(|t| t.theta).collect()
    }

    /// Per-product price intervals. Prices past the demand-zero point earn
    /// nothing and are cut off, unless that would empty the box.
    pub fn price_boxes(&self) -> Result<Vec<(f64, f64)>> {
        self.products
            .iter()
            .map(|t| {
                let lo = t.cost / (1.0 - t.margin_lb);
                let mut hi = t.cost / (1.0 - t.margin_ub);
                if let Some(cap) = self.price_cap {
                    hi = hi.min(cap);
                }
                if lo > hi {
                    return Err(Error::Infeasible {
                        binding: format!(
                            "margin_lb of product {} exceeds the price cap",
                            t.product_id
                        ),
                    });
                }
                if t.theta.beta < 0.0 {
                    let zero = -t.theta.alpha / t.theta.beta;
                    hi = hi.min(zero).max(lo);
                }
                Ok((lo, hi))
            })
            .collect()
    }

    /// `sum(((1 - T) p_i - c_i) D_i)`: non-negative exactly when the overall
    /// margin meets the target `T`.
    fn margin_slack(&self, prices: &[f64]) -> f64 {
        let Some(target) = self.margin_target else {
            return f64::INFINITY;
        };
        prices
            .iter()
            .zip(&self.products)
            .map(|(&p, t)| ((1.0 - target) * p - t.cost) * t.theta.demand(p).max(0.0))
            .sum()
    }

    /// Box point maximizing the margin slack, product by product.
    fn slack_anchor(&self, boxes: &[(f64, f64)], target: f64) -> Vec<f64> {
        self.products
            .iter()
            .zip(boxes)
            .map(|(t, &(lo, hi))| {
                let h = |p: f64| ((1.0 - target) * p - t.cost) * t.theta.demand(p).max(0.0);
                let mut best = lo;
                let mut candidates = vec![hi];
                if t.theta.beta < 0.0 {
                    let vertex =
                        t.cost / (2.0 * (1.0 - target)) - t.theta.alpha / (2.0 * t.theta.beta);
                    candidates.push(vertex.clamp(lo, hi));
                }
                for c in candidates {
                    if h(c) > h(best) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}

fn project(prices: &mut [f64], boxes: &[(f64, f64)]) {
    for (p, &(lo, hi)) in prices.iter_mut().zip(boxes) {
        *p = p.clamp(lo, hi);
    }
}

struct Penalized<'a> {
    problem: &'a PricingProblem,
    weight: f64,
}

impl Penalized<'_> {
    fn value(&self, prices: &[f64]) -> f64 {
        let r = revenue(prices, &self.problem.thetas());
        match self.problem.margin_target {
            Some(_) => {
                let v = (-self.problem.margin_slack(prices)).max(0.0);
                r - self.weight * v * v
            }
            None => r,
        }
    }

    fn gradient(&self, prices: &[f64]) -> Vec<f64> {
        let slack = self.problem.margin_slack(prices);
        let violation = (-slack).max(0.0);
        let target = self.problem.margin_target.unwrap_or(0.0);
        prices
            .iter()
            .zip(&self.problem.products)
            .map(|(&p, t)| {
                let (a, b) = (t.theta.alpha, t.theta.beta);
                if a + b * p <= 0.0 {
                    return 0.0;
                }
                let d_rev = a + 2.0 * b * p;
                if violation > 0.0 {
                    let d_slack = (1.0 - target) * (a + b * p) + b * ((1.0 - target) * p - t.cost);
                    d_rev + 2.0 * self.weight * violation * d_slack
                } else {
                    d_rev
                }
            })
            .collect()
    }
}

/// Projected gradient ascent with Armijo backtracking.
fn ascend(objective: &Penalized<'_>, start: &[f64], boxes: &[(f64, f64)]) -> Vec<f64> {
    let mut p = start.to_vec();
    let mut f = objective.value(&p);
    let mut step = 1.0;
    for _ in 0..MAX_ITERATIONS {
        let g = objective.gradient(&p);
        let mut accepted = None;
        for _ in 0..60 {
            let mut q: Vec<f64> = p.iter().zip(&g).map(|(x, d)| x + step * d).collect();
            project(&mut q, boxes);
            let ascent: f64 = q
                .iter()
                .zip(&p)
                .zip(&g)
                .map(|((a, b), d)| (a - b) * d)
                .sum();
            let fq = objective.value(&q);
            if fq >= f + 1e-4 * ascent {
                accepted = Some((q, fq));
                break;
            }
            step *= 0.5;
        }
        let Some((q, fq)) = accepted else { break };
        let moved = q
            .iter()
            .zip(&p)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max);
        let scale = p.iter().map(|x| x.abs()).fold(1.0, f64::max);
        p = q;
        f = fq;
        step *= 2.0;
        if moved <= 1e-13 * scale {
            break;
        }
    }
    p
}

/// Smallest move from `p` towards `anchor` that closes the margin gap.
fn restore(problem: &PricingProblem, p: &[f64], anchor: &[f64]) -> Vec<f64> {
    let at = |s: f64| -> Vec<f64> { p.iter().zip(anchor).map(|(a, b)| a + s * (b - a)).collect() };
    if problem.margin_slack(p) >= 0.0 {
        return p.to_vec();
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..100 {
        let mid = 0.5 * (lo + hi);
        if problem.margin_slack(&at(mid)) >= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    at(hi)
}

fn solution(
    problem: &PricingProblem,
    prices: Vec<f64>,
    start: Option<usize>,
) -> Result<PricingSolution> {
    let report = margin_constraints(&prices, problem)?;
    Ok(PricingSolution {
        revenue: revenue(&prices, &problem.thetas()),
        overall_margin: report.overall,
        product_margins: report.per_product,
        feasible: report.feasible,
        prices,
        start,
    })
}

fn run_start(
    problem: &PricingProblem,
    boxes: &[(f64, f64)],
    anchor: &[f64],
    revenue_scale: f64,
    seed: u64,
    index: usize,
) -> Result<PricingSolution> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mut p: Vec<f64> = boxes
        .iter()
        .map(|&(lo, hi)| {
            if hi > lo {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        })
        .collect();
    let mut weight = 100.0 / revenue_scale;
    for _ in 0..PENALTY_ROUNDS {
        p = ascend(&Penalized { problem, weight }, &p, boxes);
        if problem.margin_slack(&p) >= 0.0 {
            break;
        }
        weight *= 2.0;
    }
    if problem.margin_target.is_some() {
        p = restore(problem, &p, anchor);
        project(&mut p, boxes);
    }
    solution(problem, p, Some(index))
}

/// Which constraint stops every candidate from being feasible.
fn binding_constraint(problem: &PricingProblem, boxes: &[(f64, f64)]) -> String {
    let floors: Vec<f64> = boxes.iter().map(|b| b.0).collect();
    if revenue(&floors, &problem.thetas()) <= 0.0 {
        "no price in the margin boxes has positive demand".into()
    } else {
        format!(
            "overall margin target {} is unreachable within the margin boxes",
            problem.margin_target.unwrap_or(0.0)
        )
    }
}

/// Best feasible solution over `n_starts` random starts. Start `i` draws
/// from its own stream of `seed`, so more starts never do worse.
pub fn optimize(problem: &PricingProblem, n_starts: usize, seed: u64) -> Result<PricingSolution> {
    problem.validate()?;
    if n_starts == 0 {
        return Err(Error::InvalidConfig(
            "at least one start is required".into(),
        ));
    }
    let boxes = problem.price_boxes()?;
    let anchor = match problem.margin_target {
        Some(target) => {
            let anchor = problem.slack_anchor(&boxes, target);
            if problem.margin_slack(&anchor) < 0.0 || revenue(&anchor, &problem.thetas()) <= 0.0 {
                return Err(Error::Infeasible {
                    binding: binding_constraint(problem, &boxes),
                });
            }
            anchor
        }
        None => boxes.iter().map(|b| b.0).collect(),
    };
    let revenue_scale = problem
        .products
        .iter()
        .zip(&boxes)
        .map(|(t, &(_, hi))| hi * t.theta.demand(0.0).abs().max(t.theta.demand(hi).abs()))
        .sum::<f64>()
        .max(1e-12);

    let runs: Vec<PricingSolution> = (0..n_starts)
        .into_par_iter()
        .map(|i| run_start(problem, &boxes, &anchor, revenue_scale, seed, i))
        .collect::<Result<_>>()?;
    runs.into_iter()
        .filter(|s| s.feasible)
        .reduce(|best, s| if s.revenue > best.revenue { s } else { best })
        .ok_or_else(|| Error::Infeasible {
            binding: binding_constraint(problem, &boxes),
        })
}

/// Exhaustive search over `points_per_axis` prices per product, spaced evenly
/// across each margin box.
pub fn grid_oracle(problem: &PricingProblem, points_per_axis: usize) -> Result<PricingSolution> {
    problem.validate()?;
    let n = problem.products.len();
    if n > GRID_MAX_PRODUCTS {
        return Err(Error::TooManyProducts {
            found: n,
            max: GRID_MAX_PRODUCTS,
        });
    }
    if points_per_axis < 2 {
        return Err(Error::InvalidConfig(
            "grid needs at least two points per axis".into(),
        ));
    }
    let boxes = problem.price_boxes()?;
    let target = problem.margin_target.unwrap_or(f64::NEG_INFINITY);
    // per-axis price, revenue and margin-slack contribution
    let axes: Vec<Vec<(f64, f64, f64)>> = problem
        .products
        .iter()
        .zip(&boxes)
        .map(|(t, &(lo, hi))| {
            (0..points_per_axis)
                .map(|k| {
                    let p = lo + (hi - lo) * k as f64 / (points_per_axis - 1) as f64;
                    let d = t.theta.demand(p).max(0.0);
                    let slack = if target.is_finite() {
                        ((1.0 - target) * p - t.cost) * d
                    } else {
                        0.0
                    };
                    (p, p * d, slack)
                })
                .collect()
        })
        .collect();

    let total = points_per_axis.pow(n as u32);
    let best = (0..total)
        .into_par_iter()
        .fold(
            || None::<(f64, usize)>,
            |best, mut code| {
                let index = code;
                let (mut r, mut s) = (0.0, 0.0);
                for axis in &axes {
                    let (_, ri, si) = axis[code % points_per_axis];
                    r += ri;
                    s += si;
                    code /= points_per_axis;
                }
                if r > 0.0 && s >= 0.0 && best.is_none_or(|(b, i)| r > b || (r == b && index < i)) {
                    Some((r, index))
                } else {
                    best
                }
            },
        )
        .reduce(
            || None,
            |a, b| match (a, b) {
                (Some(x), Some(y)) => Some(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) {
                    y
                } else {
                    x
                }),
                (x, None) => x,
                (None, y) => y,
            },
        );
    let Some((_, mut code)) = best else {
        return Err(Error::Infeasible {
            binding: "no grid point satisfies the margin constraints".into(),
        });
    };
    let prices = axes
        .iter()
        .map(|axis| {
            let p = axis[code % points_per_axis].0;
            code /= points_per_axis;
            p
        })
        .collect();
    solution(problem, prices, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn product(alpha: f64, beta: f64, cost: f64, lb: f64, ub: f64) -> ProductTerms {
        ProductTerms {
            product_id: 0,
            theta: DemandTheta { alpha, beta },
            cost,
            margin_lb: lb,
            margin_ub: ub,
        }
    }

    #[test]
    fn revenue_floors_demand() {
        let thetas = [
            DemandTheta {
                alpha: 10.0,
                beta: -1.0,
            },
            DemandTheta {
                alpha: 1.0,
                beta: -1.0,
            },
        ];
        assert_eq!(revenue(&[5.0, 3.0], &thetas), 25.0);
        assert_eq!(revenue(&[0.0, 0.0], &thetas), 0.0);
    }

    #[test]
    fn hand_margins() {
        let problem = PricingProblem {
            products: vec![
                product(10.0, -1.0, 2.0, 0.0, 0.9),
                product(20.0, -2.0, 3.0, 0.0, 0.9),
            ],
            margin_target: Some(0.5),
            price_cap: None,
        };
        let r = margin_constraints(&[5.0, 5.0], &problem).unwrap();
        // demand 5 and 10: (3*5 + 2*10) / (5*5 + 5*10)
        assert!((r.overall.unwrap() - 35.0 / 75.0).abs() < 1e-15);
        assert_eq!(r.per_product, vec![0.6, 0.4]);
        assert!(!r.feasible);
        let at_cost = margin_constraints(&[2.0, 3.0], &problem).unwrap();
        assert_eq!(at_cost.overall, Some(0.0));
        let dead = margin_constraints(&[20.0, 20.0], &problem).unwrap();
        assert_eq!(dead.overall, None);
        assert!(!dead.feasible);
    }

    #[test]
    fn floor_binding_single_product() {
        let problem = PricingProblem {
            products: vec![product(10.0, -1.0, 4.0, 0.25, 0.9)],
            margin_target: None,
            price_cap: None,
        };
        let s = optimize(&problem, 8, 1).unwrap();
        assert!((s.prices[0] - 16.0 / 3.0).abs() < 1e-6);
        assert!((s.revenue - 16.0 / 3.0 * (10.0 - 16.0 / 3.0)).abs() < 1e-6);
    }

    #[test]
    fn interior_vertex() {
        let problem = PricingProblem {
            products: vec![product(10.0, -1.0, 0.01, 0.0, 0.999)],
            margin_target: None,
            price_cap: None,
        };
        let s = optimize(&problem, 4, 0).unwrap();
        assert!((s.prices[0] - 5.0).abs() < 1e-6);
        assert_eq!(s.start.map(|i| i < 4), Some(true));
    }

    #[test]
    fn unreachable_target_is_reported() {
        let problem = PricingProblem {
            products: vec![product(10.0, -1.0, 4.0, 0.0, 0.5)],
            margin_target: Some(0.8),
            price_cap: None,
        };
        match optimize(&problem, 4, 0) {
            Err(Error::Infeasible { binding }) => {
                assert!(binding.contains("margin target"), "{binding}")
            }
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            grid_oracle(&problem, 50),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn cap_below_floor() {
        let problem = PricingProblem {
            products: vec![product(10.0, -1.0, 4.0, 0.5, 0.9)],
            margin_target: None,
            price_cap: Some(7.0),
        };
        assert!(matches!(
            optimize(&problem, 4, 0),
            Err(Error::Infeasible { .. })
        ));
    }

    #[test]
    fn grid_guards_size() {
        let problem = PricingProblem {
            products: vec![product(10.0, -1.0, 1.0, 0.0, 0.9); 5],
            margin_target: None,
            price_cap: None,
        };
        assert!(matches!(
            grid_oracle(&problem, 3),
            Err(Error::TooManyProducts { found: 5, max: 4 })
        ));
    }
}
