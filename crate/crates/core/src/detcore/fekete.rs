use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::basis::SectionBasis;
use crate::domain::{BaseMeasure, Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::linalg::greedy_select_rows;

use super::{Configuration, DetState};

/// A move must raise `log|det|` by more than this to count as an improvement.
pub const EXCHANGE_TOL: f64 = 1e-10;

/// Gains below this are treated as rounding noise during local refinement.
const REFINE_TOL: f64 = 1e-14;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeketeBudget {
    /// Pool exchanges across all rounds.
    pub max_exchanges: usize,
    /// Local-refinement sweeps across all rounds.
    pub max_sweeps: usize,
    /// Smallest local step, relative to the diameter of `K`.
    pub min_step: f64,
}

impl Default for FeketeBudget {
    fn default() -> Self {
        FeketeBudget {
            max_exchanges: 10_000,
            max_sweeps: 2_000,
            min_step: 1e-9,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct FeketeResult {
    pub config: Configuration,
    pub logdet: f64,
    /// Configuration chosen by the greedy initialization and its log-determinant.
    pub init_config: Configuration,
    pub init_logdet: f64,
    pub exchanges: usize,
    pub sweeps: usize,
    pub pool_size: usize,
    /// False when a budget ran out before a fixed point was reached.
    pub converged: bool,
}

/// Tensor grid of `K` at resolution `grid_res` followed by `4 N_p` draws from `measure`.
pub fn candidate_pool<R: Rng + ?Sized>(
    domain: &WeightedDomain,
    measure: &BaseMeasure,
    n_p: usize,
    grid_res: usize,
    rng: &mut R,
) -> Result<Vec<Point>> {
    let mut pool = domain.grid(grid_res);
    for _ in 0..4 * n_p {
        pool.push(measure.sample(rng)?);
    }
    Ok(pool)
}

/// Approximate maximizer of `|det|` over `K^{N_p}`.
///
/// Greedy volume selection from the pool, then alternating rounds of pool
/// exchange (best single replacement over all slots and candidates) and
/// pattern-search refinement of each point with a halving step.
pub fn fekete_search(
    basis: &SectionBasis,
    domain: &WeightedDomain,
    pool: &[Point],
    budget: &FeketeBudget,
) -> Result<FeketeResult> {
    basis.check_domain(domain)?;
    let n = basis.n_p();
    if pool.len() < 4 * n {
        return Err(Error::InvalidArgument(format!(
            "candidate pool of {} points is smaller than 4 N_p = {}",
            pool.len(),
            4 * n
        )));
    }
    if budget.max_exchanges == 0 && budget.max_sweeps == 0 {
        return Err(Error::InvalidArgument("Fekete budget is zero".into()));
    }
    for x in pool {
        if !domain.contains(x)? {
            return Err(Error::OutsideDomain);
        }
    }
    let e = basis.evaluation_matrix(domain, pool);
    let (rows, pivots) = greedy_select_rows(&e, n);
    if pivots.last().is_some_and(|v| !(*v > 0.0)) {
        return Err(Error::SingularConfiguration);
    }
    let init = Configuration::new(rows.iter().map(|&r| pool[r].clone()).collect(), basis.p());
    let mut state = DetState::new(basis, domain, &init)?;
    if !state.logabsdet().is_finite() {
        return Err(Error::SingularConfiguration);
    }
    let init_logdet = state.logabsdet();

    let mut exchanges = 0;
    let mut sweeps = 0;
    let mut step = domain.diameter() / (4.0 * (basis.p() + 1) as f64);
    let min_step = budget.min_step * domain.diameter();
    let mut converged = false;
    loop {
        let swapped = exchange_round(&mut state, pool, &e, budget.max_exchanges, &mut exchanges);
        let (moved, done) = refine_round(
            &mut state,
            basis,
            domain,
            &mut step,
            min_step,
            budget.max_sweeps,
            &mut sweeps,
        );
        if !swapped && !moved && done {
            converged = true;
            break;
        }
        if exchanges >= budget.max_exchanges && sweeps >= budget.max_sweeps {
            break;
        }
    }
    state.refactor();
    Ok(FeketeResult {
        logdet: state.logabsdet(),
        config: state.config(),
        init_config: init,
        init_logdet,
        exchanges,
        sweeps,
        pool_size: pool.len(),
        converged,
    })
}

/// Best single pool replacement, repeated until no candidate gains more than
/// [`EXCHANGE_TOL`]. Returns whether any exchange happened.
fn exchange_round(
    state: &mut DetState,
    pool: &[Point],
    e: &DMatrix<f64>,
    max_exchanges: usize,
    exchanges: &mut usize,
) -> bool {
    let mut any = false;
    while *exchanges < max_exchanges {
        let Some(inv) = state.inverse() else { break };
        // r[(c, i)] = det ratio of putting candidate c into slot i
        let r = e * inv;
        let mut best = (0, 0, 1.0f64);
        for i in 0..r.ncols() {
            for c in 0..r.nrows() {
                let v = r[(c, i)].abs();
                if v > best.2 {
                    best = (c, i, v);
                }
            }
        }
        if best.2.ln() <= EXCHANGE_TOL {
            break;
        }
        let (c, i, _) = best;
        state.set_point_row(i, pool[c].clone(), &e.row(c).transpose());
        *exchanges += 1;
        any = true;
    }
    any
}

/// Pattern search with step halving. Returns (moved, finished) where
/// `finished` means the step fell below `min_step` without a budget stop.
fn refine_round(
    state: &mut DetState,
    basis: &SectionBasis,
    domain: &WeightedDomain,
    step: &mut f64,
    min_step: f64,
    max_sweeps: usize,
    sweeps: &mut usize,
) -> (bool, bool) {
    let mut moved = false;
    while *step >= min_step {
        if *sweeps >= max_sweeps {
            return (moved, false);
        }
        *sweeps += 1;
        let mut improved = false;
        for i in 0..state.n() {
            for dir in 0..domain.local_directions() {
                for h in [*step, -*step] {
                    let Some(y) = domain.perturb(state.point(i), dir, h) else {
                        continue;
                    };
                    let row = basis.weighted_row_unchecked(domain, &y);
                    if state.row_delta(i, &row) > REFINE_TOL {
                        state.set_point_row(i, y, &row);
                        improved = true;
                        break;
                    }
                }
            }
        }
        if improved {
            moved = true;
        } else {
            *step *= 0.5;
        }
    }
    (moved, true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::Realization;
    use crate::detcore::logdet;
    use crate::domain::Weight;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;
    use std::sync::Arc;

    fn run(domain: Arc<WeightedDomain>, p: usize, seed: u64) -> (SectionBasis, Vec<Point>, FeketeResult) {
        let mu = BaseMeasure::uniform(domain.clone());
        let b = SectionBasis::build_for(&domain, p, Realization::Orthogonal).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pool = candidate_pool(&domain, &mu, b.n_p(), 128, &mut rng).unwrap();
        let r = fekete_search(&b, &domain, &pool, &FeketeBudget::default()).unwrap();
        (b, pool, r)
    }

    pub(crate) fn sorted_gaps(domain: &WeightedDomain, pts: &[Point]) -> Vec<f64> {
        let mut t: Vec<f64> = pts.iter().map(|x| domain.chart1d(x).unwrap()).collect();
        t.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut gaps: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
        gaps.push(t[0] + 2.0 * PI - t[t.len() - 1]);
        gaps
    }

    #[test]
    fn circle_fekete_is_equispaced() {
        let d = Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap());
        let (_, _, r) = run(d.clone(), 2, 1);
        assert!(r.converged);
        for g in sorted_gaps(&d, r.config.points()) {
            assert!((g - 2.0 * PI / 5.0).abs() < 1e-4, "{g}");
        }
    }

    #[test]
    fn fine_grid_exhaustive_oracle_agrees_at_five_points() {
        // best 5-subset of a 40-point grid that contains the equispaced 5-gon
        let d = Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap());
        let b = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let grid = d.grid(40);
        let mut best = f64::NEG_INFINITY;
        let idx: Vec<usize> = (0..40).collect();
        for a in 1..40 {
            for c in (a + 1)..40 {
                for e in (c + 1)..40 {
                    for f in (e + 1)..40 {
                        let pts = [0, idx[a], idx[c], idx[e], idx[f]].map(|k| grid[k].clone()).to_vec();
                        let ld = logdet(&b, &d, &Configuration::new(pts, 2)).unwrap().0;
                        best = best.max(ld);
                    }
                }
            }
        }
        let (_, _, r) = run(d, 2, 5);
        assert!((r.logdet - best).abs() < 1e-8, "{} {best}", r.logdet);
    }

    #[test]
    fn flat_weight_interval_uses_both_endpoints() {
        for p in 1..=6 {
            let d = Arc::new(WeightedDomain::cube(1, -1.0, 1.0, Weight::FlatMetric).unwrap());
            let (_, _, r) = run(d, p, 2);
            let xs: Vec<f64> = r.config.points().iter().map(|x| x[0]).collect();
            assert!(xs.iter().any(|x| (x + 1.0).abs() < 1e-12), "p={p} {xs:?}");
            assert!(xs.iter().any(|x| (x - 1.0).abs() < 1e-12), "p={p} {xs:?}");
        }
    }

    #[test]
    fn beats_random_configurations_and_is_exchange_stable() {
        let d = Arc::new(WeightedDomain::full_sphere(2, Weight::Linear(vec![0.0, 0.0, 0.3])).unwrap());
        let (b, pool, r) = run(d.clone(), 2, 3);
        assert!(r.logdet >= r.init_logdet);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..100 {
            let c = Configuration::new((0..b.n_p()).map(|_| d.sample_uniform(&mut rng)).collect(), 2);
            assert!(r.logdet >= logdet(&b, &d, &c).unwrap().0);
        }
        let state = DetState::new(&b, &d, &r.config).unwrap();
        for x in &pool {
            let row = b.weighted_row_unchecked(&d, x);
            for i in 0..b.n_p() {
                assert!(state.row_delta(i, &row) <= EXCHANGE_TOL + 1e-12);
            }
        }
    }

    #[test]
    fn small_pool_and_zero_budget_are_errors() {
        let d = Arc::new(WeightedDomain::full_sphere(1, Weight::Zero).unwrap());
        let b = SectionBasis::build_for(&d, 2, Realization::Orthogonal).unwrap();
        let pool = d.grid(19);
        assert!(fekete_search(&b, &d, &pool, &FeketeBudget::default()).is_err());
        let pool = d.grid(40);
        let zero = FeketeBudget {
            max_exchanges: 0,
            max_sweeps: 0,
            min_step: 1e-9,
        };
        assert!(fekete_search(&b, &d, &pool, &zero).is_err());
    }
}
