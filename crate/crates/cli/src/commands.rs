use std::path::Path;

use nalgebra::DMatrix;
use qdev_core::deviation::{main_bound, rate_function, MeasurementSetup};
use qdev_core::fixtures::{ising_pair, reference_chain, run_suite, SuiteOptions};
use qdev_core::inequalities::{
    concentration_bound, relative_entropy, verify_poincare_ti, w1_lower_bound, ConcentrationInput,
    FunctionalConstants, LipschitzContext, Provenance,
};
use qdev_core::io::{parse_json, MatrixJson, ModelFile, SetupFile};
use qdev_core::lindblad::{check_detailed_balance, fisher_information, stationary_state, Lindbladian};
use qdev_core::models::{
    symmetry_counterexamples, channel_generator, classical_embedding, depolarizing, heat_bath, tensor_product,
    CounterexampleParams, ClassicalChain, DEFAULT_DIMENSION_GUARD,
};
use qdev_core::trajectories::{compare_with_bound, run_ensemble, run_linear_ensemble, TrajectoryConfig};
use qdev_core::{DensityOperator, Error, FaithfulState, InnerProductKind};
use serde_json::{json, Value};

use crate::args::*;
use crate::error::{CliError, EXIT_NUMERICAL};
use crate::report::{format_float, to_pretty, write_file, write_stdout, Cell, RunContext, Table};

type CmdResult = Result<(), CliError>;

fn indexed(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|j| format!("{prefix}_{j}")).collect()
}

fn cells(values: &[f64]) -> Vec<Cell> {
    values.iter().map(|&x| Cell::Num(x)).collect()
}

fn load_lindbladian(run: &mut RunContext, path: &Path) -> Result<Lindbladian, CliError> {
    let text = run.read_input(path)?;
    let model: ModelFile = parse_json(&text, &path.display().to_string())?;
    Ok(model.to_lindbladian()?)
}

fn load_state(run: &mut RunContext, path: &Path) -> Result<DensityOperator, CliError> {
    let text = run.read_input(path)?;
    let m: MatrixJson = parse_json(&text, &path.display().to_string())?;
    Ok(DensityOperator::new(m.to_matrix("state")?)?)
}

fn load_problem(run: &mut RunContext, p: &ProblemArgs) -> Result<(MeasurementSetup, DensityOperator), CliError> {
    let ctx = stationary_state(&load_lindbladian(run, &p.model)?)?;
    let text = run.read_input(&p.setup)?;
    let setup_file: SetupFile = parse_json(&text, &p.setup.display().to_string())?;
    let setup = setup_file.to_setup(ctx)?;
    let rho = match &p.state {
        Some(path) => load_state(run, path)?,
        None => setup.ctx().stationary().clone(),
    };
    Ok((setup, rho))
}

fn problem_params(p: &ProblemArgs) -> Value {
    json!({
        "model": p.model.display().to_string(),
        "setup": p.setup.display().to_string(),
        "state": p.state.as_ref().map(|s| s.display().to_string()),
    })
}

pub fn model_new(run: &mut RunContext, a: &ModelNewArgs) -> CmdResult {
    let (name, l, template) = match a.template {
        Template::Depolarizing => {
            let sigma = match &a.sigma {
                Some(p) => FaithfulState::diagonal(p)?,
                None => FaithfulState::maximally_mixed(a.dim),
            };
            let diag: Vec<f64> = (0..sigma.dim()).map(|i| sigma.matrix()[(i, i)].re).collect();
            ("depolarizing", depolarizing(&sigma), json!({ "template": "depolarizing", "sigma": diag }))
        }
        Template::Classical => {
            let chain = match &a.rates {
                Some(path) => {
                    let text = run.read_input(path)?;
                    let rows: Vec<Vec<f64>> = parse_json(&text, &path.display().to_string())?;
                    let n = rows.len();
                    if rows.iter().any(|r| r.len() != n) {
                        return Err(CliError::validation("invalid_input", "rates: expected a square matrix"));
                    }
                    ClassicalChain::new(DMatrix::from_fn(n, n, |i, j| rows[i][j]))?
                }
                None => reference_chain()?,
            };
            let rates: Vec<Vec<f64>> =
                (0..chain.size()).map(|i| (0..chain.size()).map(|j| chain.rates()[(i, j)]).collect()).collect();
            ("classical", classical_embedding(&chain), json!({ "template": "classical", "rates": rates }))
        }
        Template::Tensor => {
            let factor = depolarizing(&FaithfulState::maximally_mixed(a.dim));
            let l = tensor_product(&vec![factor; a.factors], DEFAULT_DIMENSION_GUARD)?;
            ("tensor", l, json!({ "template": "tensor", "dim": a.dim, "factors": a.factors }))
        }
        Template::HeatBath => {
            let hb = heat_bath(&ising_pair(a.beta)?)?;
            ("heat-bath", hb.lindbladian, json!({ "template": "heat-bath", "beta": a.beta }))
        }
        Template::Counterexamples => {
            let fx = symmetry_counterexamples(&CounterexampleParams::default())?;
            let (which, channel) = match a.which {
                CounterexampleChannel::Phi => ("phi", &fx.phi),
                CounterexampleChannel::Psi => ("psi", &fx.psi),
                CounterexampleChannel::PsiTilde => ("psi-tilde", &fx.psi_tilde),
                CounterexampleChannel::PChannel => ("p-channel", &fx.p_channel),
            };
            ("counterexamples", channel_generator(channel)?, json!({ "template": "counterexamples", "which": which }))
        }
    };
    if let Some(path) = &a.state_out {
        let ctx = stationary_state(&l)?;
        write_file(path, &to_pretty(&MatrixJson::from_matrix(ctx.stationary().matrix()))?)?;
    }
    let bytes = to_pretty(&ModelFile::from_lindbladian(name, &l, Some(template)))?;
    match &a.out {
        Some(path) => write_file(path, &bytes),
        None => write_stdout(&bytes),
    }
}

pub fn bound(run: &mut RunContext, a: &BoundArgs) -> CmdResult {
    let (setup, rho) = load_problem(run, &a.problem)?;
    let report = main_bound(&setup, &rho, &a.r)?;
    let l = setup.len();
    let mut columns = vec!["t".to_string()];
    columns.extend(indexed("r", l));
    columns.extend(indexed("mean", l));
    columns.extend(indexed("lambda", l));
    columns.extend(["exponent", "prefactor", "residual", "bound"].map(String::from));
    let mut table = Table::new(columns);
    for &t in &a.t {
        if !(t > 0.0) || !t.is_finite() {
            return Err(CliError::validation("invalid_input", format!("t must be positive, got {t}")));
        }
        let mut row = vec![Cell::Num(t)];
        row.extend(cells(&report.r));
        row.extend(cells(&report.mean));
        row.extend(cells(&report.lambda_star));
        row.extend(cells(&[report.exponent, report.prefactor, report.residual, report.bound(t)]));
        table.push(row);
    }
    let mut params = problem_params(&a.problem);
    params["r"] = json!(a.r);
    params["t"] = json!(a.t);
    run.emit(&table, &a.output, params)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|x| {
            x.trim()
                .parse::<f64>()
                .map_err(|_| CliError::validation("invalid_input", format!("{what}: cannot parse `{x}`")))
        })
        .collect()
}

fn parse_range(text: &str) -> Result<Vec<Vec<f64>>, CliError> {
    let bad = || CliError::validation("invalid_input", format!("range: expected lo:hi:n, got `{text}`"));
    let parts: Vec<&str> = text.split(':').collect();
    if parts.len() != 3 {
        return Err(bad());
    }
    let lo: f64 = parts[0].parse().map_err(|_| bad())?;
    let hi: f64 = parts[1].parse().map_err(|_| bad())?;
    let n: usize = parts[2].parse().map_err(|_| bad())?;
    if n == 0 || !lo.is_finite() || !hi.is_finite() {
        return Err(bad());
    }
    if n == 1 {
        return Ok(vec![vec![lo]]);
    }
    Ok((0..n).map(|i| vec![lo + (hi - lo) * i as f64 / (n - 1) as f64]).collect())
}

pub fn rate(run: &mut RunContext, a: &RateArgs) -> CmdResult {
    let mut grid = a.points.iter().map(|p| parse_list(p, "s")).collect::<Result<Vec<_>, _>>()?;
    if let Some(range) = &a.range {
        grid.extend(parse_range(range)?);
    }
    if grid.is_empty() {
        return Err(CliError::validation("missing_input", "give grid points with --s or --range"));
    }
    let (setup, _) = load_problem(run, &a.problem)?;
    let points = rate_function(&setup, &grid)?;
    let l = setup.len();
    let mut columns = indexed("s", l);
    columns.push("rate".into());
    columns.extend(indexed("lambda", l));
    columns.push("unbounded".into());
    let mut table = Table::new(columns);
    for p in &points {
        let mut row = cells(&p.s);
        row.push(Cell::Num(p.value));
        row.extend(cells(&p.lambda));
        row.push(Cell::Bool(p.unbounded));
        table.push(row);
    }
    let mut params = problem_params(&a.problem);
    params["grid"] = json!(grid);
    run.emit(&table, &a.output, params)
}

fn trajectory_config(run: &RunContext, a: &SimulateArgs) -> Result<TrajectoryConfig, CliError> {
    let seed = run.seed.ok_or_else(|| {
        CliError::validation("missing_seed", "simulation needs a seed: pass --seed or set QDEV_SEED")
    })?;
    let cfg = TrajectoryConfig::new(a.dt, a.t_max, a.paths, seed);
    cfg.validate()?;
    Ok(cfg)
}

fn simulate_params(a: &SimulateArgs, cfg: &TrajectoryConfig, checkpoints: &[f64]) -> Value {
    let mut params = problem_params(&a.problem);
    params["config"] = serde_json::to_value(cfg).unwrap_or(Value::Null);
    params["checkpoints"] = json!(checkpoints);
    params["r"] = json!(a.r.iter().map(|&x| format_float(x)).collect::<Vec<_>>());
    params["linear"] = json!(a.linear);
    params
}

pub fn simulate(run: &mut RunContext, a: &SimulateArgs, compare: bool) -> CmdResult {
    let cfg = trajectory_config(run, a)?;
    let (setup, rho) = load_problem(run, &a.problem)?;
    let checkpoints = a.checkpoints.clone().unwrap_or_else(|| vec![a.t_max]);
    let l = setup.len();
    let warning = cfg.intensity_warning(&setup);
    if a.linear {
        if compare {
            return Err(CliError::validation("invalid_input", "--linear applies to simulate only"));
        }
        let (summary, failures) = run_linear_ensemble(&setup, &rho, &cfg, &checkpoints)?;
        let mut table = Table::new(["t", "z_mean", "z_stderr"]);
        for s in &summary {
            table.push(cells(&[s.t, s.mean, s.stderr]));
        }
        run.diagnostics = json!({ "linear_failures": failures, "intensity_warning": warning });
        return run.emit(&table, &a.output, simulate_params(a, &cfg, &checkpoints));
    }
    let bound = if compare { Some(main_bound(&setup, &rho, &a.r)?) } else { None };
    let ens = run_ensemble(&setup, &rho, &cfg, &a.r, &checkpoints)?;
    let mut columns: Vec<String> =
        ["t", "exceedances", "n_paths", "estimate", "ci_low", "ci_high"].map(String::from).to_vec();
    columns.extend(indexed("estimator_mean", l));
    columns.extend(indexed("estimator_stderr", l));
    if compare {
        columns.extend(["exponent", "prefactor", "bound", "margin", "consistent"].map(String::from));
    }
    let mut table = Table::new(columns);
    for c in &ens.checkpoints {
        let mut row =
            vec![Cell::Num(c.t), c.tail.exceedances.into(), c.tail.n_paths.into()];
        row.extend(cells(&[c.tail.estimate, c.tail.ci_low, c.tail.ci_high]));
        row.extend(cells(&c.estimator_mean));
        row.extend(cells(&c.estimator_stderr));
        if let Some(report) = &bound {
            let cmp = compare_with_bound(&c.tail, report, c.t);
            row.extend(cells(&[report.exponent, report.prefactor, cmp.bound, cmp.margin]));
            row.push(cmp.consistent.into());
        }
        table.push(row);
    }
    run.diagnostics = json!({
        "resamples": ens.resamples,
        "positivity_violations": ens.positivity_violations,
        "total_steps": ens.total_steps,
        "violation_fraction": ens.violation_fraction(),
        "intensity_warning": warning,
    });
    run.emit(&table, &a.output, simulate_params(a, &cfg, &checkpoints))
}

pub fn inequalities(run: &mut RunContext, a: &InequalityArgs) -> CmdResult {
    let ctx = stationary_state(&load_lindbladian(run, &a.model)?)?;
    let mut table = Table::new(["quantity", "value", "provenance"]);
    let computed = "computed";
    for (name, kind) in
        [("kms_deviation", InnerProductKind::Kms), ("gns_deviation", InnerProductKind::Gns), ("bkm_deviation", InnerProductKind::Bkm)]
    {
        table.push(vec![name.into(), check_detailed_balance(kind, &ctx)?.deviation.into(), computed.into()]);
    }
    let mut constants = FunctionalConstants::computed(&ctx)?;
    if let Some(alpha2) = a.lsi {
        constants = constants.with_lsi(alpha2, Provenance::UserSupplied)?;
    }
    if let Some(c) = a.ti {
        constants = constants.with_ti(c)?;
    }
    let provenance = |p: Provenance| match p {
        Provenance::Computed => "computed",
        Provenance::ClosedForm => "closed_form",
        Provenance::UserSupplied => "user_supplied",
    };
    table.push(vec!["spectral_gap".into(), constants.spectral_gap.value.into(), computed.into()]);
    if let Some(c) = constants.lsi_alpha2 {
        table.push(vec!["lsi_alpha2".into(), c.value.into(), provenance(c.provenance).into()]);
    }
    if let Some(c) = constants.ti_constant {
        table.push(vec!["ti_constant".into(), c.value.into(), provenance(c.provenance).into()]);
    }
    if let Some(path) = &a.state {
        let rho = load_state(run, path)?;
        let sigma = ctx.sigma()?;
        let info = fisher_information(&ctx, &rho)?;
        let pi = verify_poincare_ti(&ctx, &rho)?;
        table.push(vec!["relative_entropy".into(), relative_entropy(sigma, &rho)?.into(), computed.into()]);
        table.push(vec!["fisher_information".into(), info.into(), computed.into()]);
        table.push(vec!["trace_distance_squared".into(), pi.lhs.into(), computed.into()]);
        table.push(vec!["poincare_transport_rhs".into(), pi.rhs.into(), computed.into()]);
        // generators without modular-eigenvector jumps have no Lipschitz norm here
        let w1 = match LipschitzContext::new(&ctx) {
            Ok(lip) => w1_lower_bound(&lip, &rho, sigma.state())?,
            Err(Error::NoBohrFrequencies) => f64::NAN,
            Err(e) => return Err(e.into()),
        };
        table.push(vec!["w1_lower_bound".into(), w1.into(), computed.into()]);
        if let Some(c) = constants.ti_constant {
            table.push(vec!["transport_rhs".into(), (2.0 * c.value * info).sqrt().into(), provenance(c.provenance).into()]);
        }
    }
    let params = json!({
        "model": a.model.display().to_string(),
        "state": a.state.as_ref().map(|s| s.display().to_string()),
        "lsi": a.lsi,
        "ti": a.ti,
    });
    run.emit(&table, &a.output, params)
}

pub fn concentrate(run: &mut RunContext, a: &ConcentrateArgs) -> CmdResult {
    let text = run.read_input(&a.input)?;
    let input: ConcentrationInput = parse_json(&text, &a.input.display().to_string())?;
    let bound = concentration_bound(&input)?;
    for (index, &value) in a.r.iter().enumerate() {
        if !(value >= 0.0) {
            return Err(Error::NegativeThreshold { index, value }.into());
        }
    }
    let mut table = Table::new(["t", "r", "rate", "prefactor", "exponent", "bound"]);
    for &t in &a.t {
        for &r in &a.r {
            table.push(cells(&[t, r, bound.rate, bound.prefactor, bound.exponent(t, r), bound.bound(t, r)]));
        }
    }
    let params = json!({ "input": a.input.display().to_string(), "t": a.t, "r": a.r });
    run.emit(&table, &a.output, params)
}

pub fn check(run: &mut RunContext, a: &CheckArgs) -> CmdResult {
    let Suite::Reference = a.suite;
    let defaults = SuiteOptions::default();
    let opts = SuiteOptions { n_paths: a.paths, seed: run.seed.unwrap_or(defaults.seed), n_states: a.states };
    let reports = run_suite(&opts);
    let mut table = Table::new(["id", "criterion", "passed", "metrics", "notes"]);
    for r in &reports {
        eprintln!("criterion {:>2} {:<28} {}", r.id, r.title, if r.passed { "PASS" } else { "FAIL" });
        let metrics: Vec<String> = r.metrics.iter().map(|(k, v)| format!("{k}={}", format_float(*v))).collect();
        table.push(vec![
            usize::from(r.id).into(),
            r.title.into(),
            r.passed.into(),
            metrics.join(";").into(),
            r.notes.join("; ").into(),
        ]);
    }
    let params = json!({ "suite": "reference", "paths": opts.n_paths, "states": opts.n_states, "seed": opts.seed });
    run.emit(&table, &a.output, params)?;
    let failed: Vec<u8> = reports.iter().filter(|r| !r.passed).map(|r| r.id).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError {
            code: "fixtures_failed".into(),
            message: format!("{} of {} criteria failed", failed.len(), reports.len()),
            context: json!({ "failed": failed }),
            exit: EXIT_NUMERICAL,
        })
    }
}
