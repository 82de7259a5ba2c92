use std::path::{Path, PathBuf};
use std::time::Duration;

use bae_oed::baem::read_baem;
use bae_oed::ensemble::read_csv_matrix;
use bae_oed::pcn::{mcmc_forward_solves, synthesize_data, tune_beta, DesignMisfit};
use bae_oed::{
    apply_design, bae_posterior, compare_designs_mcmc, evaluate_designs, greedy_design, prior_predictive_noise,
    random_designs, run_black_box, save_ensemble, synthesize_ensemble, write_stats, BlackBoxSpec, DMatrix,
    DVector, DesignVector, EnsembleFormat, Error, GaussianDensity, PcnConfig,
};
use serde_json::json;

use crate::args::{
    BaselineArgs, DesignArgs, FileFormat, ModelArgs, PosteriorArgs, SampleArgs, StatsArgs, ValidateArgs,
};
use crate::error::{usage, CliError};
use crate::manifest::Recorder;
use crate::report::{
    f, join_sensors, out_path, parse_k_range, parse_sensor_list, read_design_file, write_table, NamedDesign,
    DESIGN_HEADER,
};
use crate::setup::{build_problem, isotropic_noise, kernel_for, load_model, require_problem};

/// Pilot ensemble size used to scale noise when `validate` gets no `--noise-std`.
const NOISE_PILOT: usize = 500;
const TUNE_PILOT_STEPS: usize = 2_000;
const TUNE_ROUNDS: usize = 8;

/// Manifest destination, or `None` for a dry run.
pub type Outcome = Result<Option<PathBuf>, CliError>;

fn manifest_beside(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".manifest.json");
    PathBuf::from(s)
}

fn read_param_rows(path: &Path) -> Result<DMatrix<f64>, CliError> {
    if path.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")) {
        Ok(read_csv_matrix(path, "params")?)
    } else {
        Ok(read_baem(path)?.params)
    }
}

pub fn sample(a: &SampleArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    let format = match a.format {
        FileFormat::Baem => EnsembleFormat::Baem,
        FileFormat::Csv => EnsembleFormat::Csv,
    };
    let e = if let Some(exe) = &a.black_box {
        let params_path = a.params.as_ref().ok_or_else(|| usage("--black-box needs --params"))?;
        if !(a.timeout.is_finite() && a.timeout > 0.0) {
            return Err(usage(format!("--timeout must be positive, got {}", a.timeout)));
        }
        if a.max_parallel == 0 {
            return Err(usage("--max-parallel must be at least 1"));
        }
        let params = read_param_rows(params_path)?;
        if dry_run {
            println!(
                "plan: sample via {} — {} forward solves (black-box runs), up to {} in parallel, seeds {}..{}",
                exe.display(),
                params.nrows(),
                a.max_parallel,
                a.seed,
                a.seed.wrapping_add(params.nrows() as u64)
            );
            return Ok(None);
        }
        rec.input(params_path);
        rec.seed("seed", a.seed);
        let spec = BlackBoxSpec {
            executable: exe.clone(),
            working_dir: a.work_dir.clone().unwrap_or_else(std::env::temp_dir),
            timeout: Duration::from_secs_f64(a.timeout),
            max_parallel: a.max_parallel,
        };
        run_black_box(&spec, &params, a.seed)?
    } else {
        let p = require_problem(build_problem(&a.problem, rec)?, "unless --black-box is given")?;
        if a.q < 2 {
            return Err(usage("--q must be at least 2"));
        }
        if dry_run {
            println!(
                "plan: sample {} — {} forward solves, n_v = {}, n_d = {}, seed {}",
                p.problem.name(),
                a.q,
                p.problem.n_params(),
                p.problem.layout().n_data(),
                a.seed
            );
            return Ok(None);
        }
        rec.seed("seed", a.seed);
        synthesize_ensemble(&p.problem, &p.prior, a.q, a.seed)?
    };
    for o in save_ensemble(&e, &a.out, format)? {
        rec.output(o);
    }
    rec.result("q", e.len());
    rec.result("n_params", e.n_params());
    rec.result("n_data", e.n_data());
    eprintln!("wrote {} rows to {}", e.len(), a.out.display());
    Ok(Some(manifest_beside(&a.out)))
}

/// Forward solves needed to set up the error model (finite differences only).
fn model_plan(m: &ModelArgs, rec: &mut Recorder) -> Result<String, CliError> {
    let source = match (&m.stats, &m.ensemble) {
        (Some(s), _) => format!("saved statistics {}", s.display()),
        (None, Some(e)) => format!("ensemble {} with surrogate {}", e.display(), m.surrogate),
        (None, None) => return Err(usage("one of --ensemble or --stats is required")),
    };
    let solves = if m.stats.is_none() && m.surrogate == "fd" {
        let p = require_problem(build_problem(&m.problem, rec)?, "for --surrogate fd")?;
        2 * p.problem.n_params() + 1
    } else {
        0
    };
    Ok(format!("{source}; {solves} forward solves"))
}

pub fn stats(a: &StatsArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    if dry_run {
        println!("plan: stats — {}", model_plan(&a.model, rec)?);
        return Ok(None);
    }
    let model = load_model(&a.model, rec)?;
    write_stats(&a.out, &model.stats)?;
    rec.output(&a.out);
    Ok(Some(manifest_beside(&a.out)))
}

pub fn design(a: &DesignArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    if dry_run {
        println!(
            "plan: design k = {}{} — {}",
            a.k,
            a.marginal.map(|n| format!(", marginal over {n} primary parameters")).unwrap_or_default(),
            model_plan(&a.model, rec)?
        );
        return Ok(None);
    }
    let model = load_model(&a.model, rec)?;
    let kernel = kernel_for(&model.stats, a.marginal)?;
    let trace = greedy_design(&kernel, a.k)?;
    let rows: Vec<Vec<String>> = (0..trace.chosen.len())
        .map(|i| {
            vec![
                (i + 1).to_string(),
                trace.chosen[i].to_string(),
                f(trace.criterion_path[i]),
                f(trace.posterior_trace_path[i]),
            ]
        })
        .collect();
    let out = out_path(&a.out_dir, "design.csv")?;
    write_table(&out, &DESIGN_HEADER, &rows)?;
    rec.output(&out);
    rec.result("chosen", json!(trace.chosen));
    rec.result("prior_trace", kernel.prior_trace);
    rec.result("mode", if a.marginal.is_some() { "marginal" } else { "joint" });
    println!("chosen sensors: {}", join_sensors(&trace.chosen));
    if let (Some(c), Some(t)) = (trace.criterion_path.last(), trace.posterior_trace_path.last()) {
        println!("criterion {} posterior trace {} (prior {})", f(*c), f(*t), f(kernel.prior_trace));
    }
    Ok(Some(out_path(&a.out_dir, "design.manifest.json")?))
}

pub fn baseline(a: &BaselineArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    let ks = parse_k_range(&a.k_range)?;
    if a.n_random == 0 {
        return Err(usage("--n-random must be at least 1"));
    }
    if dry_run {
        println!(
            "plan: baseline k ∈ {:?}, {} random designs per k — {}",
            ks,
            a.n_random,
            model_plan(&a.model, rec)?
        );
        return Ok(None);
    }
    let model = load_model(&a.model, rec)?;
    let kernel = kernel_for(&model.stats, a.marginal)?;
    let k_max = *ks.iter().max().expect("non-empty k range");
    let greedy = greedy_design(&kernel, k_max)?;
    rec.seed("seed", a.seed);
    let mut rows = Vec::with_capacity(ks.len());
    for &k in &ks {
        let designs = random_designs(kernel.layout, k, a.n_random, a.seed.wrapping_add(k as u64))?;
        let report = evaluate_designs(&kernel, &designs)?;
        let q = report.summary.expect("at least one random design");
        rows.push(vec![
            k.to_string(),
            f(greedy.criterion_path[k - 1]),
            f(q.min),
            f(q.q25),
            f(q.median),
            f(q.q75),
            f(q.max),
        ]);
    }
    let out = out_path(&a.out_dir, "baseline.csv")?;
    write_table(&out, &["k", "greedy", "min", "q25", "median", "q75", "max"], &rows)?;
    rec.output(&out);
    rec.result("greedy_order", json!(greedy.chosen));
    Ok(Some(out_path(&a.out_dir, "baseline.manifest.json")?))
}

fn full_data_vector(path: &Path, n_d: usize) -> Result<DVector<f64>, CliError> {
    let m = read_csv_matrix(path, "data")?;
    if m.len() != n_d || (m.nrows() != 1 && m.ncols() != 1) {
        return Err(Error::DimensionMismatch {
            context: "data vector (one row or one column)",
            expected: n_d.to_string(),
            actual: format!("{}x{}", m.nrows(), m.ncols()),
        }
        .into());
    }
    // a single row or single column: both store the values in order
    Ok(DVector::from_iterator(n_d, m.transpose().iter().copied()))
}

pub fn posterior(a: &PosteriorArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    let chosen = match (&a.design, &a.sensor_list) {
        (Some(p), _) => {
            rec.input(p);
            let mut ds = read_design_file(p)?;
            if ds.len() != 1 {
                return Err(usage(format!("{} holds {} designs; posterior takes one", p.display(), ds.len())));
            }
            ds.remove(0).sensors
        }
        (None, Some(s)) => parse_sensor_list(s)?,
        (None, None) => return Err(usage("one of --design or --sensor-list is required")),
    };
    if a.data.is_none() && a.data_seed.is_none() {
        return Err(usage("one of --data or --data-seed is required"));
    }
    if dry_run {
        let synth = usize::from(a.data_seed.is_some());
        println!(
            "plan: posterior for sensors {} — {}; {} extra forward solve(s) for synthetic data",
            join_sensors(&chosen),
            model_plan(&a.model, rec)?,
            synth
        );
        return Ok(None);
    }
    let model = load_model(&a.model, rec)?;
    let t = &model.stats;
    let d = DesignVector::for_layout(t.layout, &chosen)?;
    let full = match (&a.data, a.data_seed) {
        (Some(p), _) => {
            rec.input(p);
            full_data_vector(p, t.n_data())?
        }
        (None, Some(seed)) => {
            let p = require_problem(model.problem, "to synthesize data")?;
            rec.seed("data_seed", seed);
            synthesize_data(&p.problem, &p.prior, &t.noise, seed)?.1
        }
        (None, None) => unreachable!("checked above"),
    };
    let post = bae_posterior(t, &d, &apply_design(&d, &full)?)?;
    let rows: Vec<Vec<String>> = (0..post.dim())
        .map(|i| vec![i.to_string(), f(post.mean()[i]), f(post.cov()[(i, i)])])
        .collect();
    let out = out_path(&a.out_dir, "posterior.csv")?;
    write_table(&out, &["index", "mean", "variance"], &rows)?;
    rec.output(&out);
    let trace = post.cov().trace();
    rec.result("posterior_trace", trace);
    rec.result("sensors", json!(chosen));
    println!("posterior trace {}", f(trace));
    Ok(Some(out_path(&a.out_dir, "posterior.manifest.json")?))
}

pub fn validate(a: &ValidateArgs, dry_run: bool, rec: &mut Recorder) -> Outcome {
    let cfg = PcnConfig {
        beta: a.beta,
        n_steps: a.n_steps,
        n_burn: a.n_burn,
        thin: a.thin,
        seed: a.seed,
    };
    cfg.validate()?;
    if a.data_seeds == 0 {
        return Err(usage("--data-seeds must be at least 1"));
    }
    let p = require_problem(build_problem(&a.problem, rec)?, "for validate")?;
    let layout = p.problem.layout();

    let mut named: Vec<NamedDesign> = Vec::new();
    for path in &a.designs {
        rec.input(path);
        named.extend(read_design_file(path)?);
    }
    if a.n_random > 0 {
        let k = named.first().map_or(0, |d| d.sensors.len());
        rec.seed("random_design_seed", a.seed);
        for (i, d) in random_designs(layout, k, a.n_random, a.seed)?.iter().enumerate() {
            named.push(NamedDesign {
                name: format!("random-{i}"),
                sensors: d.sensors(),
            });
        }
    }
    let designs: Vec<DesignVector> = named
        .iter()
        .map(|d| DesignVector::for_layout(layout, &d.sensors))
        .collect::<Result<_, _>>()?;

    let pilot = if a.noise_std.is_some() { 0 } else { NOISE_PILOT as u128 };
    let tuning = if a.tune { (TUNE_PILOT_STEPS * TUNE_ROUNDS) as u128 + 1 } else { 0 };
    let solves = mcmc_forward_solves(designs.len(), a.data_seeds, &cfg) + pilot + tuning;
    if solves > a.max_forward_solves {
        return Err(usage(format!(
            "plan needs {solves} forward solves, above --max-forward-solves {}",
            a.max_forward_solves
        )));
    }
    if dry_run {
        println!(
            "plan: validate {} designs × {} data seeds on {} — {} forward solves ({} steps, burn-in {}, thin {})",
            designs.len(),
            a.data_seeds,
            p.problem.name(),
            solves,
            cfg.n_steps,
            cfg.n_burn,
            cfg.thin
        );
        return Ok(None);
    }

    let noise: GaussianDensity = match a.noise_std {
        Some(s) => isotropic_noise(layout.n_data(), s)?,
        None => {
            let pilot_seed = a.seed ^ 0x6e6f_6973_65;
            rec.seed("noise_pilot_seed", pilot_seed);
            let e = synthesize_ensemble(&p.problem, &p.prior, NOISE_PILOT, pilot_seed)?;
            prior_predictive_noise(&e, a.noise_fraction)?
        }
    };
    rec.result("noise_std", noise.cov()[(0, 0)].sqrt());
    rec.seed("chain_seed", a.seed);
    let data_seeds: Vec<u64> = (0..a.data_seeds as u64).collect();

    let cfg = if a.tune {
        let (_, data) = synthesize_data(&p.problem, &p.prior, &noise, data_seeds[0])?;
        let obs = apply_design(&designs[0], &data)?;
        let misfit = DesignMisfit::new(&p.problem, &noise, &obs, &designs[0])?;
        let tuned = tune_beta(&p.prior, |v: &DVector<f64>| misfit.eval(v), &cfg, TUNE_PILOT_STEPS, TUNE_ROUNDS)?;
        eprintln!("tuned beta: {}", tuned.beta);
        tuned
    } else {
        cfg
    };
    rec.result("beta", cfg.beta);

    let table = compare_designs_mcmc(&p.problem, &p.prior, &noise, &designs, &data_seeds, &cfg)?;
    let rows: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| {
            vec![
                r.design.to_string(),
                named[r.design].name.clone(),
                join_sensors(&named[r.design].sensors),
                r.data_seed.to_string(),
                f(r.trace),
                f(r.acceptance),
                f(r.min_ess),
            ]
        })
        .collect();
    let out = out_path(&a.out_dir, "validation.csv")?;
    write_table(
        &out,
        &["design", "name", "sensors", "data_seed", "trace", "acceptance", "min_ess"],
        &rows,
    )?;
    rec.output(&out);
    let summary: Vec<Vec<String>> = table
        .per_design
        .iter()
        .map(|g| {
            vec![
                g.design.to_string(),
                named[g.design].name.clone(),
                named[g.design].sensors.len().to_string(),
                f(g.mean_trace),
                f(g.std_trace),
            ]
        })
        .collect();
    let out2 = out_path(&a.out_dir, "validation_summary.csv")?;
    write_table(&out2, &["design", "name", "k", "mean_trace", "std_trace"], &summary)?;
    rec.output(&out2);
    for g in &table.per_design {
        println!("{}: mean trace {} ± {}", named[g.design].name, f(g.mean_trace), f(g.std_trace));
    }
    Ok(Some(out_path(&a.out_dir, "validate.manifest.json")?))
}
