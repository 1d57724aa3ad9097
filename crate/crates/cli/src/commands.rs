use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use eip_core::binio::atomic_write;
use eip_core::generative::{recover_ensemble, sample_rows, train_with, Method, SampleRequest, Strategy};
use eip_core::metrics::{
    fmt_float, sliced_wasserstein, swd_sweep, sweep_data, sweep_recover_seed, tarp_coverage, CoverageCurve,
    MetricReport, MetricRow, ModelRecoverer, Recoverer, SwdConfig, SweepConfig, TarpConfig,
};
use eip_core::nn::{load_checkpoint_for_dim, save_checkpoint, ModelBundle};
use eip_core::rng::{derive_rng, derive_seed, rng_from_seed, Rng};
use eip_core::synthetic::{
    load_corpus, load_dataset, make_pair_dataset, make_training_corpus, save_corpus, save_dataset, Corpus, PriorSpec,
};
use eip_core::{Error, Result};
use ndarray::{Array2, Axis};
use rand_distr::{Distribution, Normal};

use crate::config::ExperimentConfig;
use crate::manifest::RunManifest;

pub fn corpus_path(out: &Path) -> PathBuf {
    out.join("data").join("corpus.eipc")
}

pub fn observations_path(cfg: &ExperimentConfig, out: &Path) -> PathBuf {
    match &cfg.sample.observations {
        Some(p) => PathBuf::from(p),
        None => out.join("data").join("observations.eipd"),
    }
}

pub fn checkpoint_path(out: &Path, name: &str) -> PathBuf {
    out.join("models").join(format!("{name}.eipm"))
}

fn require(path: &Path, what: &str) -> Result<()> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} {} not found", path.display())))
    }
}

/// Echo the resolved config and start a manifest.
fn begin(cfg: &ExperimentConfig, command: &str) -> Result<(PathBuf, RunManifest)> {
    let out = cfg.output_dir();
    let text = cfg.to_toml();
    atomic_write(&out.join("config.resolved.toml"), text.as_bytes())?;
    Ok((out, RunManifest::new(command, &text)))
}

fn load_model(path: &Path, d: usize) -> Result<ModelBundle> {
    load_checkpoint_for_dim(path, d).map_err(|e| match e {
        Error::Format(m) if m.contains("expected") => Error::Config(m),
        other => other,
    })
}

fn swd_config(cfg: &ExperimentConfig) -> SwdConfig {
    SwdConfig {
        n_projections: cfg.eval.n_projections,
        seed: derive_seed(cfg.seed, "swd", 0),
        require_equal_sizes: false,
    }
}

fn sweep_config(cfg: &ExperimentConfig, experiment: &str) -> SweepConfig {
    SweepConfig {
        experiment: experiment.to_string(),
        n_samples: cfg.eval.n_samples,
        seed: derive_seed(cfg.seed, "eval", 0),
        swd: swd_config(cfg),
    }
}

pub fn gen_data(cfg: &ExperimentConfig) -> Result<()> {
    let (out, mut man) = begin(cfg, "gen-data")?;
    let fwd = cfg.forward()?;
    let corpus = man.stage("corpus", |_| {
        make_training_corpus(&cfg.training_priors()?, &fwd, cfg.data.n_per_prior, derive_seed(cfg.seed, "corpus", 0))
    })?;
    let path = corpus_path(&out);
    save_corpus(&corpus, &path)?;
    man.artifact(&path);

    let prior = cfg.prior_from(&cfg.sample.prior)?;
    let obs = make_pair_dataset(&prior, &fwd, cfg.sample.n_obs, &mut derive_rng(cfg.seed, "observations", 0))?;
    let path = out.join("data").join("observations.eipd");
    save_dataset(&obs, &path)?;
    man.artifact(&path);
    eprintln!(
        "wrote {} datasets x {} pairs and {} observations under {}",
        corpus.datasets.len(),
        cfg.data.n_per_prior,
        obs.len(),
        out.display()
    );
    man.finish(&out)?;
    Ok(())
}

fn loss_csv(losses: &[f64]) -> String {
    let mut s = String::from("step,loss\n");
    for (i, l) in losses.iter().enumerate() {
        writeln!(s, "{i},{}", fmt_float(*l)).unwrap();
    }
    s
}

fn train_one(cfg: &ExperimentConfig, corpus: &Corpus, method: Method, n: usize, name: &str, out: &Path) -> Result<ModelBundle> {
    let tc = cfg.train_config(method, n)?;
    let every = cfg.train.log_every.max(1);
    let mut recent: Vec<f64> = Vec::new();
    let result = train_with(corpus, &tc, |step, loss| {
        recent.push(loss);
        if recent.len() > 100 {
            recent.remove(0);
        }
        if (step + 1) % every == 0 {
            eprintln!("{name}: step {} loss {loss:.5}", step + 1);
        }
    });
    match result {
        Ok(o) => {
            save_checkpoint(&o.bundle, &checkpoint_path(out, name))?;
            atomic_write(&out.join("models").join(format!("{name}.loss.csv")), loss_csv(&o.losses).as_bytes())?;
            Ok(o.bundle)
        }
        Err(e) => {
            if e.is_numeric() {
                let mut dump = format!("method = {name}\nerror = {e}\nconfig = {tc:?}\nrecent_losses =\n");
                for l in &recent {
                    writeln!(dump, "{l:?}").unwrap();
                }
                let _ = atomic_write(&out.join("diagnostics").join(format!("{name}.txt")), dump.as_bytes());
            }
            Err(e)
        }
    }
}

pub fn train(cfg: &ExperimentConfig, only: &[String]) -> Result<()> {
    let methods: Vec<Method> = if only.is_empty() {
        cfg.methods()?
    } else {
        only.iter().map(|m| m.parse()).collect::<Result<_>>()?
    };
    let out = cfg.output_dir();
    let path = corpus_path(&out);
    require(&path, "corpus")?;
    let (out, mut man) = begin(cfg, "train")?;
    let corpus = man.stage("load-corpus", |_| load_corpus(&path))?;
    for m in methods {
        man.stage(m.name(), |man| {
            train_one(cfg, &corpus, m, cfg.train.n_subset, m.name(), &out)?;
            man.artifact(&checkpoint_path(&out, m.name()));
            Ok(())
        })?;
    }
    man.finish(&out)?;
    Ok(())
}

fn matrix_csv(x: &Array2<f64>) -> String {
    let header: Vec<String> = (1..=x.ncols()).map(|c| format!("x{c}")).collect();
    let mut s = header.join(",");
    s.push('\n');
    for row in x.rows() {
        let cells: Vec<String> = row.iter().map(|v| fmt_float(*v)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn recover(cfg: &ExperimentConfig, method: Option<&str>) -> Result<()> {
    let out = cfg.output_dir();
    let method: Method = match method {
        Some(m) => m.parse()?,
        None => cfg.methods()?[0],
    };
    let obs_path = observations_path(cfg, &out);
    let ckpt = checkpoint_path(&out, method.name());
    require(&obs_path, "observation file")?;
    require(&ckpt, "checkpoint")?;
    let (out, mut man) = begin(cfg, "recover")?;
    let obs = load_dataset(&obs_path)?;
    let bundle = load_model(&ckpt, obs.dim())?;
    let seed = derive_seed(cfg.seed, "recover", 0);
    let strategy = cfg.strategy()?;
    let rec = man.stage("sample", |_| {
        recover_ensemble(
            &bundle,
            &SampleRequest {
                observations: obs.y.view(),
                strategy,
                seed,
                prior_params: Some(obs.prior.params()),
            },
        )
    })?;
    let path = out.join("recovered").join(format!("{}.csv", method.name()));
    atomic_write(&path, matrix_csv(&rec.x_hat).as_bytes())?;
    man.artifact(&path);
    man.notes.push(format!(
        "model = {}, strategy = {}, seed = {}, encoder passes = {}",
        rec.provenance.model, rec.provenance.strategy, rec.provenance.seed, rec.encoder_passes
    ));
    man.finish(&out)?;
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig, full: bool) -> Result<()> {
    let out = cfg.output_dir();
    let methods = cfg.methods()?;
    for m in &methods {
        require(&checkpoint_path(&out, m.name()), "checkpoint")?;
    }
    let grid = cfg.eval_grid(full)?;
    let (out, mut man) = begin(cfg, "sweep")?;
    let bundles: Vec<ModelBundle> = methods
        .iter()
        .map(|m| load_model(&checkpoint_path(&out, m.name()), 2))
        .collect::<Result<_>>()?;
    let strategy = cfg.strategy()?;
    let recs: Vec<ModelRecoverer> = methods
        .iter()
        .zip(&bundles)
        .map(|(m, b)| ModelRecoverer {
            name: m.name().to_string(),
            bundle: b,
            strategy,
            group: None,
        })
        .collect();
    let dyn_recs: Vec<&dyn Recoverer> = recs.iter().map(|r| r as &dyn Recoverer).collect();
    let experiment = if full { "sweep-full" } else { "sweep" };
    let res = man.stage("sweep", |_| swd_sweep(&dyn_recs, &grid, &cfg.forward()?, &sweep_config(cfg, experiment)))?;
    let report = MetricReport { rows: res.rows };
    let path = out.join("metrics").join(format!("{experiment}.csv"));
    report.write_csv(&path)?;
    man.artifact(&path);
    if cfg.eval.plot_data {
        for m in &methods {
            let mut s = String::from("gamma,swd\n");
            for r in report.rows.iter().filter(|r| r.method == m.name()) {
                writeln!(s, "{},{}", fmt_float(r.gamma), fmt_float(r.value)).unwrap();
            }
            let p = out.join("metrics").join("plot").join(format!("{experiment}-{}.csv", m.name()));
            atomic_write(&p, s.as_bytes())?;
            man.artifact(&p);
        }
    }
    for (r, t) in report.rows.iter().zip(&res.runtimes) {
        man.notes.push(format!("runtime {} gamma={} : {t:.3} s", r.method, r.gamma));
    }
    man.finish(&out)?;
    Ok(())
}

/// Truths and posterior sample sets for TARP.
fn tarp_inputs(cfg: &ExperimentConfig, out: &Path) -> Result<(Array2<f64>, Vec<Array2<f64>>, String, Option<PriorSpec>)> {
    let pairs = cfg.eval.tarp_pairs;
    let s = cfg.eval.tarp_samples;
    if pairs == 0 || s == 0 {
        return Err(Error::Config("tarp pairs and samples must be >= 1".into()));
    }
    let mut rng = derive_rng(cfg.seed, "tarp-data", 0);
    match cfg.eval.tarp_mode.as_str() {
        "analytic" | "point-mass" => {
            let sd = cfg.eval.analytic_noise_std;
            if !(sd > 0.0) {
                return Err(Error::Config("analytic_noise_std must be positive".into()));
            }
            let normal = Normal::new(0.0, 1.0).expect("unit normal");
            let truths = Array2::from_shape_fn((pairs, 1), |_| normal.sample(&mut rng));
            let ys: Vec<f64> = truths.iter().map(|x| x + sd * normal.sample(&mut rng)).collect();
            let v = sd * sd / (1.0 + sd * sd);
            let sets = ys
                .iter()
                .map(|y| {
                    if cfg.eval.tarp_mode == "point-mass" {
                        Array2::zeros((s, 1))
                    } else {
                        let m = y / (1.0 + sd * sd);
                        Array2::from_shape_fn((s, 1), |_| m + v.sqrt() * normal.sample(&mut rng))
                    }
                })
                .collect();
            Ok((truths, sets, cfg.eval.tarp_mode.clone(), None))
        }
        _ => {
            let method: Method = cfg.eval.tarp_method.parse()?;
            let ckpt = checkpoint_path(out, method.name());
            require(&ckpt, "checkpoint")?;
            let bundle = load_model(&ckpt, 2)?;
            let prior = cfg.prior_from(&cfg.eval.tarp_prior)?;
            let n_total = pairs.max(bundle.n_train);
            let ds = make_pair_dataset(&prior, &cfg.forward()?, n_total, &mut rng)?;
            let set = ds.y.slice(ndarray::s![..bundle.n_train.min(n_total), ..]);
            let z = bundle.condition(Some(set), Some(&prior.params()))?;
            let idx: Vec<usize> = (0..pairs).flat_map(|i| std::iter::repeat_n(i, s)).collect();
            let ys = ds.y.select(Axis(0), &idx);
            let base = derive_seed(cfg.seed, "tarp-sample", 0);
            let mut rngs: Vec<Rng> = (0..idx.len()).map(|j| rng_from_seed(derive_seed(base, "draw", j as u64))).collect();
            let draws = sample_rows(&bundle, ys.view(), z.view(), &mut rngs)?;
            let sets = (0..pairs)
                .map(|i| draws.slice(ndarray::s![i * s..(i + 1) * s, ..]).to_owned())
                .collect();
            let truths = ds.x.slice(ndarray::s![..pairs, ..]).to_owned();
            Ok((truths, sets, method.name().to_string(), Some(prior)))
        }
    }
}

pub fn tarp(cfg: &ExperimentConfig) -> Result<()> {
    let out = cfg.output_dir();
    if cfg.eval.tarp_mode == "model" {
        require(&checkpoint_path(&out, &cfg.eval.tarp_method), "checkpoint")?;
    }
    let (out, mut man) = begin(cfg, "tarp")?;
    let (truths, sets, label, prior) = man.stage("posterior-samples", |_| tarp_inputs(cfg, &out))?;
    let tcfg = TarpConfig {
        seed: derive_seed(cfg.seed, "tarp", 0),
        inflate: cfg.eval.tarp_inflate,
        ..Default::default()
    };
    let views: Vec<_> = sets.iter().map(|s| s.view()).collect();
    let curve: CoverageCurve = man.stage("coverage", |_| tarp_coverage(truths.view(), &views, &tcfg))?;

    let mut s = String::from("credibility,ecp\n");
    for (c, e) in curve.credibility.iter().zip(&curve.ecp) {
        writeln!(s, "{},{}", fmt_float(*c), fmt_float(*e)).unwrap();
    }
    let curve_path = out.join("metrics").join(format!("tarp-{label}.csv"));
    atomic_write(&curve_path, s.as_bytes())?;
    let prior = prior.unwrap_or(PriorSpec::Gauss2D { gamma: 0.0 });
    let report = MetricReport {
        rows: vec![MetricRow::for_prior("tarp", &prior, &label, "tarp_e", curve.deviation, truths.nrows(), cfg.seed)],
    };
    let summary = out.join("metrics").join(format!("tarp-{label}-summary.csv"));
    report.write_csv(&summary)?;
    man.artifact(&curve_path);
    man.artifact(&summary);
    man.notes.push(format!(
        "reference points uniform over the joint bounding box inflated by {} per side",
        tcfg.inflate
    ));
    eprintln!("tarp {label}: e = {:.4}", curve.deviation);
    man.finish(&out)?;
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum NprimeStudy {
    /// Vary the inference set size against one trained model.
    Inference,
    /// Train one model per set size.
    Training,
}

pub const NPRIME_HEADER: &str = "study,n,gamma,mu1,mu2,method,swd,n_samples,seed";

fn nprime_row(study: &str, n: usize, prior: &PriorSpec, method: &str, swd: f64, cfg: &SweepConfig) -> String {
    let [mu1, mu2] = prior.mean();
    format!(
        "{study},{n},{},{},{},{method},{},{},{}\n",
        fmt_float(prior.correlation()),
        fmt_float(mu1),
        fmt_float(mu2),
        fmt_float(swd),
        cfg.n_samples,
        cfg.seed
    )
}

/// SWD for one recoverer at one prior, using the sweep's data streams.
fn swd_at(rec: &dyn Recoverer, prior: &PriorSpec, cfg: &ExperimentConfig, sc: &SweepConfig) -> Result<f64> {
    let (x, y, reference) = sweep_data(prior, &cfg.forward()?, sc.n_samples, sc.seed)?;
    let x_hat = rec.recover(prior, x.view(), y.view(), sweep_recover_seed(sc.seed, prior))?;
    sliced_wasserstein(x_hat.view(), reference.view(), &sc.swd)
}

/// How a model trained with set size `n_train` sees observation sets of size `n`.
fn recoverer_for<'a>(name: &str, bundle: &'a ModelBundle, n: usize, sweep_strategy: Strategy) -> ModelRecoverer<'a> {
    if n == bundle.n_train {
        ModelRecoverer {
            name: name.to_string(),
            bundle,
            strategy: sweep_strategy,
            group: None,
        }
    } else {
        ModelRecoverer {
            name: name.to_string(),
            bundle,
            strategy: if n < bundle.n_train { Strategy::Duplicate } else { Strategy::RepeatedSubsets },
            group: Some(n),
        }
    }
}

pub fn nprime_study(cfg: &ExperimentConfig, study: NprimeStudy) -> Result<()> {
    let out = cfg.output_dir();
    let prior = cfg.prior_from(&cfg.eval.nprime_prior)?;
    let sc = sweep_config(cfg, "nprime");
    let mut csv = String::from(NPRIME_HEADER);
    csv.push('\n');
    match study {
        NprimeStudy::Inference => {
            let method = cfg
                .methods()?
                .into_iter()
                .find(|m| m.conditioning().uses_set())
                .unwrap_or(Method::EiFm);
            let ckpt = checkpoint_path(&out, method.name());
            require(&ckpt, "checkpoint")?;
            let (out, mut man) = begin(cfg, "nprime-study")?;
            let bundle = load_model(&ckpt, 2)?;
            for &n in &cfg.eval.nprime {
                if n == 0 {
                    return Err(Error::Config("nprime sizes must be >= 1".into()));
                }
                let rec = recoverer_for(method.name(), &bundle, n, cfg.strategy()?);
                let swd = man.stage(&format!("nprime-{n}"), |_| swd_at(&rec, &prior, cfg, &sc))?;
                csv.push_str(&nprime_row("inference", n, &prior, method.name(), swd, &sc));
            }
            let path = out.join("metrics").join("nprime-inference.csv");
            atomic_write(&path, csv.as_bytes())?;
            man.artifact(&path);
            man.finish(&out)?;
        }
        NprimeStudy::Training => {
            let path = corpus_path(&out);
            require(&path, "corpus")?;
            let (out, mut man) = begin(cfg, "nprime-study")?;
            let corpus = load_corpus(&path)?;
            for &n in &cfg.eval.train_n {
                if n == 0 {
                    return Err(Error::Config("training sizes must be >= 1".into()));
                }
                let name = format!("ei-fm-n{n}");
                let bundle = man.stage(&format!("train-{n}"), |_| train_one(cfg, &corpus, Method::EiFm, n, &name, &out))?;
                let rec = recoverer_for(&name, &bundle, n, cfg.strategy()?);
                let swd = man.stage(&format!("eval-{n}"), |_| swd_at(&rec, &prior, cfg, &sc))?;
                csv.push_str(&nprime_row("training", n, &prior, Method::EiFm.name(), swd, &sc));
            }
            let path = out.join("metrics").join("nprime-training.csv");
            atomic_write(&path, csv.as_bytes())?;
            man.artifact(&path);
            man.finish(&out)?;
        }
    }
    Ok(())
}
