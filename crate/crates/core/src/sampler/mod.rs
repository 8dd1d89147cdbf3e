//! Samplers for the beta-ensemble `|det|^beta d mu^{(x) N}`: single-site
//! Metropolis–Hastings for any `beta > 0` and the exact projection sampler
//! for `beta = 2`.

mod dpp;

pub use dpp::{dpp_sample, lbb_check, DppSampler};

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::basis::SectionBasis;
use crate::detcore::{Configuration, DetState};
use crate::domain::{BaseMeasure, Point, WeightedDomain};
use crate::error::{Error, Result};

/// The ensemble `nu_p^beta` on `K^{N_p}`.
///
/// The log-density relative to `mu^{(x) N}` is `beta log|det E(x)|` up to
/// the normalizing constant; the metric and `-p phi` factors are already part
/// of the weighted rows of `E`.
#[derive(Clone, Debug)]
pub struct EnsembleSpec {
    beta: f64,
    measure: Arc<BaseMeasure>,
    basis: Arc<SectionBasis>,
    kernel: MixtureKernel,
}

impl EnsembleSpec {
    pub fn new(beta: f64, measure: Arc<BaseMeasure>, basis: Arc<SectionBasis>) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidArgument(format!("beta must be positive, got {beta}")));
        }
        basis.check_domain(measure.domain())?;
        let kernel = MixtureKernel::new(measure.clone(), basis.p());
        Ok(EnsembleSpec {
            beta,
            measure,
            basis,
            kernel,
        })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn p(&self) -> usize {
        self.basis.p()
    }

    pub fn n_p(&self) -> usize {
        self.basis.n_p()
    }

    pub fn domain(&self) -> &WeightedDomain {
        self.measure.domain()
    }

    pub fn measure(&self) -> &Arc<BaseMeasure> {
        &self.measure
    }

    pub fn basis(&self) -> &Arc<SectionBasis> {
        &self.basis
    }

    pub fn kernel(&self) -> &MixtureKernel {
        &self.kernel
    }

    /// `beta log|det|` of a configuration, `-inf` when singular.
    pub fn log_density(&self, config: &Configuration) -> Result<f64> {
        let (ld, _) = crate::detcore::logdet(&self.basis, self.domain(), config)?;
        Ok(if ld == f64::NEG_INFINITY { ld } else { self.beta * ld })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MoveKind {
    /// Fresh draw from `mu`.
    Independence,
    /// Random-walk step, symmetric with respect to the volume measure.
    Local,
}

/// `log[m(y) q(y,x)] - log[m(x) q(x,y)]` for the reference density `m` of
/// `mu` with respect to volume, given `log m(x)` and `log m(y)`.
pub fn hastings_correction(kind: MoveKind, log_m_x: f64, log_m_y: f64) -> f64 {
    match kind {
        MoveKind::Independence => 0.0,
        MoveKind::Local => log_m_y - log_m_x,
    }
}

/// Log acceptance probability `min(0, beta delta + correction)`; a singular
/// proposal (`delta = -inf`) is never accepted.
pub fn log_acceptance(beta: f64, delta_logdet: f64, correction: f64) -> f64 {
    if delta_logdet == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    (beta * delta_logdet + correction).min(0.0)
}

/// A single-site proposal mechanism.
pub trait SiteKernel {
    /// Candidate replacement for `x` with its Hastings correction, or `None`
    /// when the proposal leaves `K` (counted as a rejection).
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Option<(Point, f64)>;
}

/// Even mixture of independence proposals from `mu` and local Gaussian steps
/// of scale `diam(K) / (4p)`.
#[derive(Clone, Debug)]
pub struct MixtureKernel {
    measure: Arc<BaseMeasure>,
    sigma: f64,
}

impl MixtureKernel {
    pub fn new(measure: Arc<BaseMeasure>, p: usize) -> Self {
        let sigma = measure.domain().diameter() / (4.0 * p.max(1) as f64);
        MixtureKernel { measure, sigma }
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }
}

impl SiteKernel for MixtureKernel {
    fn propose<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Option<(Point, f64)> {
        if rng.random::<bool>() {
            let y = self.measure.sample(rng).ok()?;
            Some((y, hastings_correction(MoveKind::Independence, 0.0, 0.0)))
        } else {
            let domain = self.measure.domain();
            let y = domain.gaussian_move(x, self.sigma, rng);
            if !domain.contains_unchecked(&y) {
                return None;
            }
            let corr = hastings_correction(
                MoveKind::Local,
                self.measure.density_at(x).ln(),
                self.measure.density_at(&y).ln(),
            );
            Some((y, corr))
        }
    }
}

/// Chain position, counters and random stream.
#[derive(Clone, Debug)]
pub struct ChainState {
    pub det: DetState,
    pub log_target: f64,
    pub accepted: u64,
    pub proposed: u64,
    pub rng: ChaCha8Rng,
}

impl ChainState {
    /// Starts at `init` with the random stream `(seed, stream)`.
    pub fn new(spec: &EnsembleSpec, init: &Configuration, seed: u64, stream: u64) -> Result<Self> {
        let det = DetState::new(&spec.basis, spec.domain(), init)?;
        if !det.logabsdet().is_finite() {
            return Err(Error::SingularConfiguration);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        Ok(ChainState {
            log_target: spec.beta * det.logabsdet(),
            det,
            accepted: 0,
            proposed: 0,
            rng,
        })
    }

    pub fn acceptance_rate(&self) -> f64 {
        if self.proposed == 0 {
            0.0
        } else {
            self.accepted as f64 / self.proposed as f64
        }
    }

    pub fn config(&self) -> Configuration {
        self.det.config()
    }
}

/// One Metropolis–Hastings update of a uniformly chosen site.
pub fn mcmc_step(spec: &EnsembleSpec, state: &mut ChainState) {
    mcmc_step_with(spec, &spec.kernel, state)
}

pub fn mcmc_step_with<K: SiteKernel>(spec: &EnsembleSpec, kernel: &K, state: &mut ChainState) {
    let n = state.det.n();
    let i = state.rng.random_range(0..n);
    state.proposed += 1;
    let Some((y, corr)) = kernel.propose(state.det.point(i), &mut state.rng) else {
        return;
    };
    let row = spec.basis.weighted_row_unchecked(spec.domain(), &y);
    let delta = state.det.row_delta(i, &row);
    let la = log_acceptance(spec.beta, delta, corr);
    let u: f64 = state.rng.random();
    if la == f64::NEG_INFINITY || u.ln() >= la {
        return;
    }
    state.det.set_point_row(i, y, &row);
    state.accepted += 1;
    state.log_target = spec.beta * state.det.logabsdet();
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    /// Single-site steps discarded first; `50 N_p^2` when unset.
    pub burn_in: Option<usize>,
    /// Number of configurations returned.
    pub keep: usize,
    /// Steps between kept configurations; `N_p` when unset.
    pub thin: Option<usize>,
}

impl ChainConfig {
    pub fn resolved_burn_in(&self, n_p: usize) -> usize {
        self.burn_in.unwrap_or(50 * n_p * n_p)
    }

    pub fn resolved_thin(&self, n_p: usize) -> usize {
        self.thin.unwrap_or(n_p).max(1)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ChainOutput {
    pub samples: Vec<Configuration>,
    pub burn_in: usize,
    pub thin: usize,
    pub accepted: u64,
    pub proposed: u64,
    pub acceptance_rate: f64,
    /// `log|det|` at every kept configuration.
    pub logdet_trace: Vec<f64>,
}

/// Runs one chain from `init` and keeps `config.keep` thinned configurations.
pub fn run_chain(
    spec: &EnsembleSpec,
    init: &Configuration,
    config: &ChainConfig,
    seed: u64,
    stream: u64,
) -> Result<ChainOutput> {
    let mut state = ChainState::new(spec, init, seed, stream)?;
    let n = spec.n_p();
    let burn_in = config.resolved_burn_in(n);
    let thin = config.resolved_thin(n);
    for _ in 0..burn_in {
        mcmc_step(spec, &mut state);
    }
    let mut samples = Vec::with_capacity(config.keep);
    let mut trace = Vec::with_capacity(config.keep);
    for _ in 0..config.keep {
        for _ in 0..thin {
            mcmc_step(spec, &mut state);
        }
        state.det.refactor();
        samples.push(state.config());
        trace.push(state.det.logabsdet());
    }
    Ok(ChainOutput {
        samples,
        burn_in,
        thin,
        accepted: state.accepted,
        proposed: state.proposed,
        acceptance_rate: state.acceptance_rate(),
        logdet_trace: trace,
    })
}
