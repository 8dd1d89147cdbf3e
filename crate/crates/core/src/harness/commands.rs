//! The `fekete`, `sample`, `ldp` and `diag` commands.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::basis::{gram, orthonormalize, section_norm_ratios, GramMatrix, SectionBasis};
use crate::detcore::{
    bm_constant, bm_fit, candidate_pool, fekete_search, sigma, tau2, BmFit, Configuration, FeketeResult,
};
use crate::domain::{BaseMeasure, Point, WeightedDomain};
use crate::error::{Error, Result};
use crate::io::{fmt_f64, write_points_csv};
use crate::metrics::{
    dist_gamma, equilibrium_ref, ldp_fit, quantile, w1_is_exact, wasserstein1, write_ldp_csv, DictionarySpec,
    EmpiricalMeasure, EquilibriumRef, LdpFit, TestDictionary, ThresholdRule, W1Target,
};
use crate::sampler::{lbb_check, run_chain, DppSampler, EnsembleSpec};

use super::config::{ExperimentConfig, SamplerKind};
use super::output::{dist_key, write_json, write_text, RecordEntry, RunRecord, Table};

const TAG_FEKETE: u64 = 1;
const TAG_MCMC: u64 = 2;
const TAG_DPP: u64 = 3;
const TAG_LBB: u64 = 4;
const TAG_NORMS: u64 = 5;

/// Stream of the task `(tag, p, beta index, chain)`; distinct tasks never share a stream.
fn stream_id(tag: u64, p: usize, beta_idx: usize, chain: usize) -> u64 {
    (tag << 56) | ((p as u64) << 32) | ((beta_idx as u64) << 16) | chain as u64
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn median(v: &[f64]) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.total_cmp(b));
    quantile(&s, 0.5)
}

/// Exit status of the command-line tool for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => 2,
        e if e.is_numerical() => 3,
        Error::MissingInput(_) | Error::Provenance(_) => 4,
        _ => 1,
    }
}

/// A validated configuration with command-line overrides applied.
#[derive(Clone, Debug)]
pub struct RunContext {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub hash: String,
    pub out: PathBuf,
    pub workers: usize,
}

impl RunContext {
    pub fn new(mut config: ExperimentConfig, seed: Option<u64>, out: Option<PathBuf>, workers: usize) -> Result<Self> {
        if seed.is_some() {
            config.seed = seed;
        }
        if let Some(dir) = out {
            config.output.dir = dir;
        }
        let seed = config.seed()?;
        let hash = config.hash();
        let out = config.output.dir.clone();
        Ok(RunContext {
            config,
            seed,
            hash,
            out,
            workers: workers.max(1),
        })
    }

    fn header(&self, extra: &str) -> String {
        format!("config_hash={} seed={} {extra}", self.hash, self.seed)
    }

    fn install<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.workers)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("worker pool: {e}")))?;
        pool.install(f)
    }

    fn record(&self, command: &str) -> RunRecord {
        let mut r = RunRecord::new(command, &self.hash, self.seed);
        if self.config.output.timings {
            r.timings = Some(BTreeMap::new());
        }
        r
    }
}

struct Degree {
    p: usize,
    raw: SectionBasis,
    raw_gram: GramMatrix,
    basis: Arc<SectionBasis>,
}

struct Setup {
    domain: Arc<WeightedDomain>,
    measure: Arc<BaseMeasure>,
    degrees: Vec<Degree>,
}

impl Setup {
    fn build(ctx: &RunContext) -> Result<Self> {
        let cfg = &ctx.config;
        let domain = cfg.build_domain()?;
        let measure = cfg.build_measure(domain.clone())?;
        let degrees = cfg
            .experiment
            .degrees
            .par_iter()
            .map(|&p| {
                let raw = SectionBasis::build_for(&domain, p, cfg.basis.realization)?;
                let raw_gram = gram(&raw, &domain, &measure, &cfg.basis.quadrature)?;
                let basis = Arc::new(orthonormalize(&raw, &raw_gram)?);
                Ok(Degree {
                    p,
                    raw,
                    raw_gram,
                    basis,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Setup {
            domain,
            measure,
            degrees,
        })
    }

    fn fekete(&self, ctx: &RunContext, d: &Degree) -> Result<FeketeResult> {
        let mut rng = rng_for(ctx.seed, stream_id(TAG_FEKETE, d.p, 0, 0));
        let grid = ctx.config.pool_grid(&self.domain);
        let pool = candidate_pool(&self.domain, &self.measure, d.basis.n_p(), grid, &mut rng)?;
        fekete_search(&d.basis, &self.domain, &pool, &ctx.config.fekete.budget)
    }
}

/// Distances of empirical measures to the equilibrium reference.
struct Distances {
    domain: Arc<WeightedDomain>,
    dicts: Vec<TestDictionary>,
    reference: EquilibriumRef,
    w1: bool,
}

impl Distances {
    fn build(ctx: &RunContext, domain: &Arc<WeightedDomain>) -> Result<Self> {
        let dc = &ctx.config.dictionary;
        let dicts = ctx
            .config
            .experiment
            .gammas
            .iter()
            .map(|&g| TestDictionary::new(domain, g, dc.modes, dc.harmonic_degree))
            .collect::<Result<Vec<_>>>()?;
        Ok(Distances {
            domain: domain.clone(),
            dicts,
            reference: equilibrium_ref(domain.clone(), ctx.config.p_ref())?,
            w1: w1_is_exact(domain),
        })
    }

    fn keys(&self) -> Vec<String> {
        let mut k: Vec<String> = self.dicts.iter().map(|d| dist_key(d.gamma())).collect();
        if self.w1 {
            k.push("w1".into());
        }
        k.sort();
        k
    }

    fn of(&self, points: &[Point]) -> Result<BTreeMap<String, f64>> {
        let emp = EmpiricalMeasure::new(points.to_vec())?;
        let mut m = BTreeMap::new();
        for d in &self.dicts {
            m.insert(dist_key(d.gamma()), dist_gamma(d, &emp, &self.reference));
        }
        if self.w1 {
            m.insert("w1".into(), wasserstein1(&self.domain, &emp, W1Target::Reference(&self.reference))?);
        }
        Ok(m)
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[derive(Serialize)]
struct FeketeSummary<'a> {
    config_hash: &'a str,
    p: usize,
    n_p: usize,
    logdet: f64,
    init_logdet: f64,
    exchanges: usize,
    sweeps: usize,
    pool_size: usize,
    converged: bool,
    sigma: f64,
    distances: &'a BTreeMap<String, f64>,
    reference: String,
}

/// Fekete configurations per degree, with distances to equilibrium.
pub fn cmd_fekete(ctx: &RunContext) -> Result<RunRecord> {
    ctx.install(|| {
        let setup = Setup::build(ctx)?;
        let dist = Distances::build(ctx, &setup.domain)?;
        let results = setup
            .degrees
            .par_iter()
            .map(|d| {
                let t = Instant::now();
                let f = setup.fekete(ctx, d)?;
                let m = dist.of(f.config.points())?;
                Ok((f, m, t.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?;

        let dir = ctx.out.join("fekete");
        let keys = dist.keys();
        let mut cols: Vec<String> = ["p", "n_p", "logdet", "init_logdet", "exchanges", "sweeps", "converged", "sigma"]
            .map(String::from)
            .to_vec();
        cols.extend(keys.iter().cloned());
        let mut table = Table::new(ctx.header(&format!("reference={}", dist.reference.label())), cols);
        let mut record = ctx.record("fekete");
        for (d, (f, m, secs)) in setup.degrees.iter().zip(&results) {
            let n = d.basis.n_p();
            let mut csv = Vec::new();
            let h = ctx.header(&format!("p={} n_p={n} logdet={}", d.p, fmt_f64(f.logdet)));
            write_points_csv(f.config.points(), &h, &mut csv)?;
            write_text(&dir.join(format!("fekete_p{}.csv", d.p)), &String::from_utf8_lossy(&csv))?;
            write_json(
                &dir.join(format!("fekete_p{}.json", d.p)),
                &FeketeSummary {
                    config_hash: &ctx.hash,
                    p: d.p,
                    n_p: n,
                    logdet: f.logdet,
                    init_logdet: f.init_logdet,
                    exchanges: f.exchanges,
                    sweeps: f.sweeps,
                    pool_size: f.pool_size,
                    converged: f.converged,
                    sigma: 0.0,
                    distances: m,
                    reference: dist.reference.label(),
                },
            )?;
            let mut row = vec![
                d.p.to_string(),
                n.to_string(),
                fmt_f64(f.logdet),
                fmt_f64(f.init_logdet),
                f.exchanges.to_string(),
                f.sweeps.to_string(),
                f.converged.to_string(),
                fmt_f64(0.0),
            ];
            row.extend(keys.iter().map(|k| fmt_f64(m[k])));
            table.rows.push(row);
            record.entries.push(RecordEntry {
                p: d.p,
                n_p: n,
                logdet: Some(f.logdet),
                sigma: Some(0.0),
                distances: m.clone(),
                ..Default::default()
            });
            if let Some(t) = record.timings.as_mut() {
                t.insert(format!("p={}", d.p), *secs);
            }
        }
        write_text(&dir.join("summary.csv"), &table.render())?;
        write_json(&dir.join("run_record.json"), &record)?;
        Ok(record)
    })
}

#[derive(Clone, Copy, Debug)]
struct SampleTask {
    kind: SamplerKind,
    degree: usize,
    beta_idx: usize,
    chain: usize,
}

/// Manifest written next to every sample archive.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SampleManifest {
    pub config_hash: String,
    pub seed: u64,
    pub stream: u64,
    pub sampler: SamplerKind,
    pub p: usize,
    pub n_p: usize,
    pub beta: f64,
    pub chain: usize,
    pub keep: usize,
    pub archive: Option<String>,
    pub burn_in: Option<usize>,
    pub thin: Option<usize>,
    pub accepted: Option<u64>,
    pub proposed: Option<u64>,
    pub acceptance_rate: Option<f64>,
    pub median_sigma: Option<f64>,
    pub median_distances: BTreeMap<String, f64>,
}

fn archive_stem(kind: SamplerKind, p: usize, beta: f64, chain: usize) -> String {
    format!("{}_p{p}_b{beta}_c{chain}", kind.name())
}

fn render_archive(header: &str, samples: &[Configuration]) -> String {
    let dim = samples.first().and_then(|c| c.points().first()).map_or(0, |x| x.len());
    let mut s = format!("# {header}\nsample,slot");
    for k in 0..dim {
        s.push_str(&format!(",x{k}"));
    }
    s.push('\n');
    for (i, c) in samples.iter().enumerate() {
        for (j, x) in c.points().iter().enumerate() {
            s.push_str(&format!("{i},{j}"));
            for v in x {
                s.push(',');
                s.push_str(&fmt_f64(*v));
            }
            s.push('\n');
        }
    }
    s
}

/// Reads a sample archive back into configurations of degree `p`.
pub fn read_archive(path: &Path, p: usize) -> Result<(Option<String>, Vec<Configuration>)> {
    let text = std::fs::read_to_string(path).map_err(|_| Error::MissingInput(path.display().to_string()))?;
    let bad = |line: usize, why: &str| Error::InvalidArgument(format!("{}:{line}: {why}", path.display()));
    let mut hash = None;
    let mut groups: Vec<Vec<Point>> = Vec::new();
    let mut seen_columns = false;
    for (k, line) in text.lines().enumerate() {
        if let Some(c) = line.strip_prefix('#') {
            if hash.is_none() {
                hash = c.split_whitespace().find_map(|t| t.strip_prefix("config_hash=")).map(String::from);
            }
            continue;
        }
        if !seen_columns {
            seen_columns = true;
            continue;
        }
        let mut fields = line.split(',');
        let i: usize = fields.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(k + 1, "sample index"))?;
        let _slot: usize = fields.next().and_then(|t| t.parse().ok()).ok_or_else(|| bad(k + 1, "slot index"))?;
        let x = fields
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|_| bad(k + 1, "coordinate"))?;
        if i == groups.len() {
            groups.push(Vec::new());
        } else if i + 1 != groups.len() {
            return Err(bad(k + 1, "samples out of order"));
        }
        groups[i].push(x);
    }
    Ok((hash, groups.into_iter().map(|g| Configuration::new(g, p)).collect()))
}

/// MCMC chains for every `(p, beta, chain)` and exact `beta = 2` samples.
pub fn cmd_sample(ctx: &RunContext) -> Result<RunRecord> {
    let cfg = &ctx.config;
    ctx.install(|| {
        let setup = Setup::build(ctx)?;
        let dist = Distances::build(ctx, &setup.domain)?;
        let fekete = setup
            .degrees
            .par_iter()
            .map(|d| setup.fekete(ctx, d))
            .collect::<Result<Vec<_>>>()?;
        let mut tasks = Vec::new();
        for degree in 0..setup.degrees.len() {
            for (beta_idx, &beta) in cfg.experiment.betas.iter().enumerate() {
                for chain in 0..cfg.sampler.chains {
                    if cfg.sampler.mcmc {
                        tasks.push(SampleTask { kind: SamplerKind::Mcmc, degree, beta_idx, chain });
                    }
                    if cfg.sampler.dpp && beta == 2.0 {
                        tasks.push(SampleTask { kind: SamplerKind::Dpp, degree, beta_idx, chain });
                    }
                }
            }
        }
        let dir = ctx.out.join("samples");
        let chain_cfg = cfg.sampler.chain_config();
        let mut done = tasks
            .par_iter()
            .map(|t| {
                let start = Instant::now();
                let d = &setup.degrees[t.degree];
                let beta = cfg.experiment.betas[t.beta_idx];
                let spec = EnsembleSpec::new(beta, setup.measure.clone(), d.basis.clone())?;
                let n = d.basis.n_p();
                let mut m = SampleManifest {
                    config_hash: ctx.hash.clone(),
                    seed: ctx.seed,
                    stream: 0,
                    sampler: t.kind,
                    p: d.p,
                    n_p: n,
                    beta,
                    chain: t.chain,
                    keep: cfg.sampler.keep,
                    archive: None,
                    burn_in: None,
                    thin: None,
                    accepted: None,
                    proposed: None,
                    acceptance_rate: None,
                    median_sigma: None,
                    median_distances: BTreeMap::new(),
                };
                let samples = match t.kind {
                    SamplerKind::Mcmc => {
                        m.stream = stream_id(TAG_MCMC, d.p, t.beta_idx, t.chain);
                        let out = run_chain(&spec, &fekete[t.degree].config, &chain_cfg, ctx.seed, m.stream)?;
                        m.burn_in = Some(out.burn_in);
                        m.thin = Some(out.thin);
                        m.accepted = Some(out.accepted);
                        m.proposed = Some(out.proposed);
                        m.acceptance_rate = Some(out.acceptance_rate);
                        out.samples
                    }
                    SamplerKind::Dpp => {
                        m.stream = stream_id(TAG_DPP, d.p, t.beta_idx, t.chain);
                        let mut rng = rng_for(ctx.seed, m.stream);
                        if cfg.sampler.keep == 0 {
                            Vec::new()
                        } else {
                            let s = DppSampler::with_default_grid(&spec)?;
                            (0..cfg.sampler.keep).map(|_| s.sample(&mut rng)).collect::<Result<Vec<_>>>()?
                        }
                    }
                };
                if !samples.is_empty() {
                    if d.p > 0 {
                        let sig = samples
                            .iter()
                            .map(|c| sigma(&d.basis, &setup.domain, c, &fekete[t.degree].config))
                            .collect::<Result<Vec<_>>>()?;
                        m.median_sigma = Some(median(&sig));
                    }
                    let ds = samples.iter().map(|c| dist.of(c.points())).collect::<Result<Vec<_>>>()?;
                    for k in dist.keys() {
                        let v: Vec<f64> = ds.iter().map(|x| x[&k]).collect();
                        m.median_distances.insert(k, median(&v));
                    }
                    let stem = archive_stem(t.kind, d.p, beta, t.chain);
                    let header = ctx.header(&format!(
                        "sampler={} p={} n_p={n} beta={beta} chain={} stream={}",
                        t.kind.name(),
                        d.p,
                        t.chain,
                        m.stream
                    ));
                    write_text(&dir.join(format!("{stem}.csv")), &render_archive(&header, &samples))?;
                    m.archive = Some(format!("{stem}.csv"));
                }
                let stem = archive_stem(t.kind, d.p, beta, t.chain);
                write_json(&dir.join(format!("{stem}.json")), &m)?;
                Ok((*t, m, start.elapsed().as_secs_f64()))
            })
            .collect::<Result<Vec<_>>>()?;
        done.sort_by_key(|(t, _, _)| (t.kind.name(), t.degree, t.beta_idx, t.chain));

        let keys = dist.keys();
        let mut cols: Vec<String> =
            ["sampler", "p", "beta", "chain", "n_p", "keep", "acceptance_rate", "median_sigma"]
                .map(String::from)
                .to_vec();
        cols.extend(keys.iter().map(|k| format!("median_{k}")));
        let mut table = Table::new(ctx.header(&format!("reference={}", dist.reference.label())), cols);
        let mut record = ctx.record("sample");
        for (t, m, secs) in &done {
            let mut row = vec![
                m.sampler.name().to_string(),
                m.p.to_string(),
                m.beta.to_string(),
                m.chain.to_string(),
                m.n_p.to_string(),
                m.keep.to_string(),
                fmt_opt(m.acceptance_rate),
                fmt_opt(m.median_sigma),
            ];
            row.extend(keys.iter().map(|k| fmt_opt(m.median_distances.get(k).copied())));
            table.rows.push(row);
            record.entries.push(RecordEntry {
                p: m.p,
                n_p: m.n_p,
                sampler: Some(m.sampler.name().into()),
                beta: Some(m.beta),
                chain: Some(m.chain),
                sigma: m.median_sigma,
                distances: m.median_distances.clone(),
                acceptance_rate: m.acceptance_rate,
                ..Default::default()
            });
            if let Some(tm) = record.timings.as_mut() {
                tm.insert(archive_stem(t.kind, m.p, m.beta, m.chain), *secs);
            }
        }
        write_text(&dir.join("summary.csv"), &table.render())?;
        write_json(&dir.join("run_record.json"), &record)?;
        Ok(record)
    })
}

#[derive(Serialize)]
struct LdpReport<'a> {
    config_hash: &'a str,
    sampler: SamplerKind,
    beta: f64,
    dictionary: DictionarySpec,
    reference: String,
    fit: &'a LdpFit,
}

/// Decay and exceedance fits from the sample archives.
pub fn cmd_ldp(ctx: &RunContext) -> Result<RunRecord> {
    let cfg = &ctx.config;
    ctx.install(|| {
        let domain = cfg.build_domain()?;
        let dist = Distances::build(ctx, &domain)?;
        let kind = cfg.ldp.sampler;
        let betas: Vec<f64> = cfg
            .experiment
            .betas
            .iter()
            .copied()
            .filter(|b| kind == SamplerKind::Mcmc || *b == 2.0)
            .collect();
        if betas.is_empty() {
            return Err(Error::Config("ldp.sampler = \"dpp\" needs beta = 2 in experiment.betas".into()));
        }
        let src = ctx.out.join("samples");
        let dir = ctx.out.join("ldp");
        let mut record = ctx.record("ldp");
        for &beta in &betas {
            // per degree: distance key -> values over all chains and samples
            let mut per_degree: Vec<(usize, usize, BTreeMap<String, Vec<f64>>)> = Vec::new();
            for &p in &cfg.experiment.degrees {
                let mut configs = Vec::new();
                let mut n_p = 0;
                for chain in 0..cfg.sampler.chains {
                    let stem = archive_stem(kind, p, beta, chain);
                    let mpath = src.join(format!("{stem}.json"));
                    let text = std::fs::read_to_string(&mpath)
                        .map_err(|_| Error::MissingInput(mpath.display().to_string()))?;
                    let m: SampleManifest = serde_json::from_str(&text)?;
                    if m.config_hash != ctx.hash {
                        return Err(Error::Provenance(format!(
                            "{} has config hash {}, expected {}",
                            mpath.display(),
                            m.config_hash,
                            ctx.hash
                        )));
                    }
                    let apath = src.join(format!("{stem}.csv"));
                    let (h, c) = read_archive(&apath, p)?;
                    if h.as_deref() != Some(ctx.hash.as_str()) {
                        return Err(Error::Provenance(format!("{} was written by another config", apath.display())));
                    }
                    n_p = m.n_p;
                    configs.extend(c);
                }
                let ds = configs.par_iter().map(|c| dist.of(c.points())).collect::<Result<Vec<_>>>()?;
                let mut by_key: BTreeMap<String, Vec<f64>> = BTreeMap::new();
                for k in dist.keys() {
                    by_key.insert(k.clone(), ds.iter().map(|x| x[&k]).collect());
                }
                per_degree.push((p, n_p, by_key));
            }
            for (p, n_p, by_key) in &per_degree {
                record.entries.push(RecordEntry {
                    p: *p,
                    n_p: *n_p,
                    sampler: Some(kind.name().into()),
                    beta: Some(beta),
                    distances: by_key.iter().map(|(k, v)| (k.clone(), median(v))).collect(),
                    ..Default::default()
                });
            }
            for d in &dist.dicts {
                let key = dist_key(d.gamma());
                let records: Vec<(usize, Vec<f64>)> =
                    per_degree.iter().map(|(p, _, m)| (*p, m[&key].clone())).collect();
                let rule = ThresholdRule {
                    gamma: d.gamma(),
                    delta: cfg.ldp.delta,
                    alpha: domain.phi_hoelder_alpha(),
                };
                let fit = ldp_fit(&records, rule)?;
                let stem = format!("ldp_{}_b{beta}_g{}", kind.name(), d.gamma());
                let mut csv = Vec::new();
                let header = ctx.header(&format!(
                    "sampler={} beta={beta} gamma={} exponent={} c={}",
                    kind.name(),
                    d.gamma(),
                    fmt_f64(fit.exponent),
                    fmt_f64(fit.c)
                ));
                write_ldp_csv(&fit, &header, &mut csv)?;
                write_text(&dir.join(format!("{stem}.csv")), &String::from_utf8_lossy(&csv))?;
                write_json(
                    &dir.join(format!("{stem}.json")),
                    &LdpReport {
                        config_hash: &ctx.hash,
                        sampler: kind,
                        beta,
                        dictionary: d.spec(),
                        reference: dist.reference.label(),
                        fit: &fit,
                    },
                )?;
            }
            if dist.w1 {
                let mut t = Table::new(
                    ctx.header(&format!("sampler={} beta={beta}", kind.name())),
                    ["p", "samples", "median_w1"].map(String::from).to_vec(),
                );
                for (p, _, m) in &per_degree {
                    t.rows.push(vec![p.to_string(), m["w1"].len().to_string(), fmt_f64(median(&m["w1"]))]);
                }
                write_text(&dir.join(format!("w1_{}_b{beta}.csv", kind.name())), &t.render())?;
            }
        }
        write_json(&dir.join("run_record.json"), &record)?;
        Ok(record)
    })
}

#[derive(Clone, Debug, Serialize)]
struct DiagRow {
    p: usize,
    n_p: usize,
    bm_constant: f64,
    sqrt_n_p: f64,
    tau: f64,
    tau_bound: f64,
    lbb: Option<(f64, f64)>,
    factorial: f64,
    l4_over_l2: f64,
    linf_over_l2: f64,
}

#[derive(Serialize)]
struct BmReport<'a> {
    config_hash: &'a str,
    delta: f64,
    sequence: Vec<(usize, f64)>,
    fit: Option<BmFit>,
    note: Option<String>,
}

/// Bernstein–Markov constants, `lbb_check`, `tau` of Fekete configurations
/// and section norm ratios per degree.
pub fn cmd_diag(ctx: &RunContext) -> Result<RunRecord> {
    let cfg = &ctx.config;
    ctx.install(|| {
        let setup = Setup::build(ctx)?;
        let res = cfg
            .diag
            .grid
            .unwrap_or(if setup.domain.model().manifold_dim() == 1 { 512 } else { 64 });
        let grid = setup.domain.grid(res);
        let rows = setup
            .degrees
            .par_iter()
            .map(|d| {
                let start = Instant::now();
                let n = d.basis.n_p();
                let bm = bm_constant(&d.basis, &setup.domain, &grid)?;
                let f = setup.fekete(ctx, d)?;
                let tau = tau2(&d.raw, &setup.domain, &d.raw_gram, &f.config)?;
                let lbb = if n <= cfg.diag.lbb_max_n {
                    let spec = EnsembleSpec::new(2.0, setup.measure.clone(), d.basis.clone())?;
                    let mut rng = rng_for(ctx.seed, stream_id(TAG_LBB, d.p, 0, 0));
                    Some(lbb_check(&spec, cfg.diag.lbb_samples, &mut rng)?)
                } else {
                    None
                };
                let mut rng = rng_for(ctx.seed, stream_id(TAG_NORMS, d.p, 0, 0));
                let count = cfg.diag.norm_ratio_sections.max(1);
                let ratios = section_norm_ratios(&d.basis, &setup.domain, &setup.measure, &grid, count, &mut rng)?;
                let c = ratios.len() as f64;
                Ok((
                    DiagRow {
                        p: d.p,
                        n_p: n,
                        bm_constant: bm,
                        sqrt_n_p: (n as f64).sqrt(),
                        tau,
                        tau_bound: (n as f64).powf(1.5),
                        lbb,
                        factorial: (1..=n).map(|k| k as f64).product(),
                        l4_over_l2: ratios.iter().map(|r| r.l4_over_l2).sum::<f64>() / c,
                        linf_over_l2: ratios.iter().map(|r| r.linf_over_l2).sum::<f64>() / c,
                    },
                    start.elapsed().as_secs_f64(),
                ))
            })
            .collect::<Result<Vec<_>>>()?;

        let dir = ctx.out.join("diag");
        let cols = [
            "p", "n_p", "bm_constant", "sqrt_n_p", "tau", "tau_bound", "lbb_mean", "lbb_stderr", "n_p_factorial",
            "lbb_rel_err", "l4_over_l2", "linf_over_l2",
        ]
        .map(String::from)
        .to_vec();
        let mut table = Table::new(ctx.header(&format!("grid={res}")), cols);
        let mut record = ctx.record("diag");
        for (r, secs) in &rows {
            let (lm, ls, le) = match r.lbb {
                Some((m, s)) => (Some(m), Some(s), Some((m - r.factorial).abs() / r.factorial)),
                None => (None, None, None),
            };
            table.rows.push(vec![
                r.p.to_string(),
                r.n_p.to_string(),
                fmt_f64(r.bm_constant),
                fmt_f64(r.sqrt_n_p),
                fmt_f64(r.tau),
                fmt_f64(r.tau_bound),
                fmt_opt(lm),
                fmt_opt(ls),
                fmt_f64(r.factorial),
                fmt_opt(le),
                fmt_f64(r.l4_over_l2),
                fmt_f64(r.linf_over_l2),
            ]);
            record.entries.push(RecordEntry {
                p: r.p,
                n_p: r.n_p,
                bm_constant: Some(r.bm_constant),
                tau: Some(r.tau),
                lbb: lm,
                ..Default::default()
            });
            if let Some(t) = record.timings.as_mut() {
                t.insert(format!("p={}", r.p), *secs);
            }
        }
        let sequence: Vec<(usize, f64)> = rows.iter().filter(|(r, _)| r.p > 0).map(|(r, _)| (r.p, r.bm_constant)).collect();
        let (fit, note) = match bm_fit(&sequence, cfg.diag.delta) {
            Ok(f) => (Some(f), None),
            Err(e) => (None, Some(e.to_string())),
        };
        write_text(&dir.join("diag.csv"), &table.render())?;
        write_json(
            &dir.join("bm_fit.json"),
            &BmReport {
                config_hash: &ctx.hash,
                delta: cfg.diag.delta,
                sequence,
                fit,
                note,
            },
        )?;
        write_json(&dir.join("run_record.json"), &record)?;
        Ok(record)
    })
}

/// One-line description of a valid configuration.
pub fn describe(ctx: &RunContext) -> Result<String> {
    let domain = ctx.config.build_domain()?;
    let e = &ctx.config.experiment;
    Ok(format!(
        "ok: {} degrees={:?} betas={:?} gammas={:?} seed={} config_hash={}",
        domain.label(),
        e.degrees,
        e.betas,
        e.gammas,
        ctx.seed,
        ctx.hash
    ))
}
