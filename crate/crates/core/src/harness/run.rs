use ndarray::{Array1, Array2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Method, SpikeSource, TestMode};
use super::oracle::{oracle_risk, TestModel};
use crate::aligned::{estimate_spikes, ArotiGcv, SpikeLevels};
use crate::baselines::{gcv_on_path, loocv_on_path, KFold};
use crate::ensembles::{generate_design, generate_design_with, make_signal, sample_response};
use crate::error::{Error, Result};
use crate::linalg;
use crate::ridge::RidgePath;
use crate::rng::{stream_rng, streams};
use crate::roti_gcv::{default_estimation_grid, tune_lambda, RotiGcv};
use crate::spectra::{svd_decompose, SpectralDecomposition};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub method: String,
    pub lambda: f64,
    pub metric_value: f64,
    pub exact_risk: f64,
    pub seed: u64,
    pub resample: u64,
    pub r2_hat: f64,
    pub sigma2_hat: f64,
    pub tuned: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellFailure {
    pub seed: u64,
    pub resample: u64,
    /// Stable error identifier, see [`Error::kind`].
    pub kind: String,
    pub message: String,
}

#[derive(Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub failures: Vec<CellFailure>,
}

/// Everything shared by the noise resamples of one seed.
struct SeedContext {
    x: Array2<f64>,
    spec: SpectralDecomposition,
    beta: Array1<f64>,
    test_model: TestModel,
    spikes: Option<SpikeLevels>,
    kfold: Vec<(usize, KFold)>,
    estimation_grid: Vec<f64>,
}

fn test_eigenvalues(x: &Array2<f64>) -> Result<Vec<f64>> {
    Ok(linalg::singular_values(x.view())?.into_iter().map(|s| s * s).collect())
}

fn prepare_seed(cfg: &ExperimentConfig, seed: u64) -> Result<SeedContext> {
    let ens = cfg.ensemble.with_seed(seed);
    let x = generate_design(&ens)?;
    let spec = svd_decompose(x.view())?;
    let beta = make_signal(&cfg.signal.with_seed(seed), &spec)?;
    let test_ens = cfg.test_ensemble().with_seed(seed);
    let coupled = cfg.coupled_indices();
    let wants_aroti = cfg.methods.contains(&Method::ArotiGcv);
    let needs_test_draw = cfg.test.mode == TestMode::Coupled
        || (wants_aroti && !coupled.is_empty() && cfg.aroti.spike_source == SpikeSource::Test);
    let test_eigs = if needs_test_draw {
        let x_test = generate_design_with(&test_ens, &mut stream_rng(seed, streams::TEST_DESIGN))?;
        Some(test_eigenvalues(&x_test)?)
    } else {
        None
    };

    let test_model = match cfg.test.mode {
        TestMode::Independent => TestModel::population(&test_ens)?,
        TestMode::Coupled => {
            let idx = &cfg.test.coupled_indices;
            let eigs = test_eigs.as_ref().expect("coupled mode draws a test set");
            let levels = estimate_spikes(eigs, idx, spec.p(), 1.0)?;
            let dirs: Vec<Array1<f64>> = idx
                .iter()
                .map(|&i| {
                    if i >= spec.p() {
                        return Err(Error::Config(format!("coupled index {i} >= p")));
                    }
                    Ok(spec.right_frame().row(i).to_owned())
                })
                .collect::<Result<_>>()?;
            TestModel::coupled(&dirs, idx, &levels, test_ens.n)?
        }
    };

    let spikes = if !wants_aroti {
        None
    } else if coupled.is_empty() {
        Some(SpikeLevels::isotropic())
    } else {
        Some(match cfg.aroti.spike_source {
            SpikeSource::Test => estimate_spikes(
                test_eigs.as_ref().expect("test draw taken"),
                &coupled,
                spec.p(),
                spec.n() as f64 / test_ens.n as f64,
            )?,
            SpikeSource::Train => {
                let eigs: Vec<f64> = spec.eigenvalues().collect();
                estimate_spikes(&eigs, &coupled, spec.p(), 1.0)?
            }
        })
    };

    let kfold = cfg
        .methods
        .iter()
        .filter_map(|m| match m {
            Method::KFold(k) => Some(*k),
            _ => None,
        })
        .map(|k| Ok((k, KFold::new(x.view(), k, seed)?)))
        .collect::<Result<_>>()?;

    let estimation_grid = match &cfg.estimation_grid {
        Some(g) => g.resolve()?,
        None => default_estimation_grid(&spec)?,
    };
    Ok(SeedContext { x, spec, beta, test_model, spikes, kfold, estimation_grid })
}

fn argmin_index(values: &[f64], sweep: &[f64]) -> Result<usize> {
    let mut i = 0;
    let (best, _) = tune_lambda(
        |_| {
            let v = values[i];
            i += 1;
            Ok(v)
        },
        sweep,
    )?;
    Ok(sweep.iter().rposition(|&l| l == best).expect("tuned value comes from the grid"))
}

fn run_cell(cfg: &ExperimentConfig, ctx: &SeedContext, sweep: &[f64], seed: u64, resample: u64) -> Result<Vec<ResultRow>> {
    let y = sample_response(ctx.x.view(), ctx.beta.view(), cfg.sigma2, cfg.noise, seed, resample)?;
    let path = RidgePath::new(&ctx.spec, y.view())?;
    let roti = RotiGcv::fit(&path, &ctx.estimation_grid, cfg.regression)?;
    let est = roti.estimate();
    let sigma2_floor = est.sigma2_hat.max(0.0);
    if est.has_negative() {
        log::debug!("seed {seed} resample {resample}: negative SNR estimate {:?}, clamped", (est.r2_hat, est.sigma2_hat));
    }

    let exact = sweep
        .iter()
        .map(|&l| oracle_risk(path.coefficients(l)?.view(), ctx.beta.view(), &ctx.test_model))
        .collect::<Result<Vec<f64>>>()?;

    let mut rows = Vec::new();
    for method in &cfg.methods {
        let (values, r2_hat, sigma2_hat) = match method {
            Method::RotiGcv => {
                let v = sweep.iter().map(|&l| roti.metric(l)).collect::<Result<Vec<_>>>()?;
                (v, est.r2_hat, est.sigma2_hat)
            }
            Method::ArotiGcv => {
                let spikes = ctx.spikes.as_ref().expect("spikes prepared for aroti");
                let fit = ArotiGcv::fit(&path, &cfg.aligned_indices(), spikes, &ctx.estimation_grid, cfg.regression)?;
                let v = sweep.iter().map(|&l| fit.metric(l)).collect::<Result<Vec<_>>>()?;
                (v, fit.r2_bulk(), fit.sigma2())
            }
            Method::Gcv => {
                let v = sweep.iter().map(|&l| gcv_on_path(&path, l)).collect::<Result<Vec<_>>>()?;
                (v, est.r2_hat, est.sigma2_hat)
            }
            Method::Loocv => {
                let v = sweep.iter().map(|&l| loocv_on_path(&path, y.view(), l)).collect::<Result<Vec<_>>>()?;
                (v, est.r2_hat, est.sigma2_hat)
            }
            Method::KFold(k) => {
                let kf = &ctx.kfold.iter().find(|(kk, _)| kk == k).expect("folds prepared").1;
                (kf.curve(y.view(), sweep)?, est.r2_hat, est.sigma2_hat)
            }
        };
        let tuned = argmin_index(&values, sweep)?;
        let name = method.to_string();
        let mut push = |label: &str, shift: f64| {
            rows.extend(sweep.iter().enumerate().map(|(i, &lambda)| ResultRow {
                method: label.to_string(),
                lambda,
                metric_value: values[i] - shift,
                exact_risk: exact[i],
                seed,
                resample,
                r2_hat,
                sigma2_hat,
                tuned: i == tuned,
            }));
        };
        push(&name, 0.0);
        if method.includes_noise() {
            push(&format!("{name}_adj"), sigma2_floor);
        }
    }
    Ok(rows)
}

/// Runs every `(seed, resample)` cell. Cells run in parallel on the current rayon
/// pool; rows come back ordered by seed, then resample, then method. A failing
/// cell is reported in `failures` and does not stop the others.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutput> {
    cfg.validate()?;
    if cfg.methods.contains(&Method::ArotiGcv) && cfg.noise != crate::ensembles::NoiseFamily::Gaussian {
        log::warn!("aroti_gcv's aligned-coefficient estimates assume Gaussian noise; got {:?}", cfg.noise);
    }
    let sweep = cfg.lambda_sweep.resolve()?;
    let contexts: Vec<(u64, Result<SeedContext>)> =
        cfg.seeds.par_iter().map(|&seed| (seed, prepare_seed(cfg, seed))).collect();
    let cells: Vec<(usize, u64)> = (0..contexts.len())
        .flat_map(|s| (0..cfg.n_noise_resamples as u64).map(move |r| (s, r)))
        .collect();
    let results: Vec<std::result::Result<Vec<ResultRow>, CellFailure>> = cells
        .par_iter()
        .map(|&(s, resample)| {
            let (seed, ctx) = &contexts[s];
            let fail = |e: &Error| CellFailure { seed: *seed, resample, kind: e.kind().into(), message: e.to_string() };
            match ctx {
                Ok(ctx) => run_cell(cfg, ctx, &sweep, *seed, resample).map_err(|e| fail(&e)),
                Err(e) => Err(fail(e)),
            }
        })
        .collect();
    let mut output = RunOutput::default();
    for res in results {
        match res {
            Ok(rows) => output.rows.extend(rows),
            Err(failure) => output.failures.push(failure),
        }
    }
    Ok(output)
}

impl RunOutput {
    /// Rows of one method, grouped per `(seed, resample)` in sweep order.
    pub fn curves(&self, method: &str) -> Vec<Vec<&ResultRow>> {
        let mut out: Vec<Vec<&ResultRow>> = Vec::new();
        for row in self.rows.iter().filter(|r| r.method == method) {
            match out.last_mut() {
                Some(cur) if cur[0].seed == row.seed && cur[0].resample == row.resample => cur.push(row),
                _ => out.push(vec![row]),
            }
        }
        out
    }
}
