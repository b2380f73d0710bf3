//! Handlers for everything except `experiment` (see [`crate::experiments`]).

use std::fs;
use std::path::Path;

use serde_json::{json, Value};

use msl_core::chains::{
    chain_conductance, restricted_distribution, run_chain, set_conductance, spectral_gap,
    ChainKind, SampleSet, StateSet, TransitionKernel,
};
use msl_core::cw::{
    strong_eta, weak_eta, CurieWeiss, MagnetizationDistribution, MagnetizationProfile,
};
use msl_core::learner::{
    fit_all, fit_fields, grid_points, magnetization_histogram, mle_grid_cw, pl_grid_cw,
    structure_threshold, FitOptions, WeightedConfigs,
};
use msl_core::math::ols_slope;
use msl_core::oracle::standard_suite_capped;
use msl_core::rng::{child_seed, from_seed};
use msl_core::spin::{model_to_json, read_model, DenseDistribution, IsingModel, SpinConfiguration};

use crate::provenance::{emit_csv, emit_json, guard, Failure, Provenance};
use crate::{
    ChainChoice, ChainSampleArgs, ExactCwArgs, FieldsArgs, FileFormat, FitArgs, GridLearnArgs,
    ModelGenArgs, ProfileFamily, StartState, StructureArgs, VerifyArgs,
};

fn chain_name(choice: ChainChoice) -> &'static str {
    match choice {
        ChainChoice::Glauber => "glauber",
        ChainChoice::Metropolis => "metropolis",
    }
}

fn kernel_for(choice: ChainChoice, model: &IsingModel) -> TransitionKernel {
    match choice {
        ChainChoice::Glauber => TransitionKernel::glauber(model),
        ChainChoice::Metropolis => TransitionKernel::metropolis(model),
    }
}

pub fn family_name(family: ProfileFamily) -> &'static str {
    match family {
        ProfileFamily::Gibbs => "gibbs",
        ProfileFamily::Taylor2 => "taylor2",
        ProfileFamily::Taylor4 => "taylor4",
        ProfileFamily::Truncated => "truncated",
    }
}

/// Build the requested magnetization weight family, reporting the expansion
/// point and quadratic coefficient where the family has them.
pub fn family_profile(
    model: &CurieWeiss,
    family: ProfileFamily,
) -> Result<(MagnetizationProfile, Option<f64>, Option<f64>), Failure> {
    let need_minimum = |err: msl_core::Error| {
        Failure::Invalid(format!(
            "family {} needs a positive-side free-energy minimum at J={}, h={}: {err}",
            family_name(family),
            model.coupling(),
            model.field()
        ))
    };
    match family {
        ProfileFamily::Gibbs => Ok((model.gibbs_profile(), None, None)),
        ProfileFamily::Taylor2 | ProfileFamily::Taylor4 => {
            let minimum = model.positive_minimum().map_err(need_minimum)?;
            let order = if matches!(family, ProfileFamily::Taylor2) { 2 } else { 4 };
            let profile = model.taylor_profile(&minimum, order)?;
            let coeff = model.quadratic_coefficient(&minimum).ok();
            Ok((profile, Some(minimum.m0), coeff))
        }
        ProfileFamily::Truncated => {
            let minimum = model.positive_minimum().map_err(need_minimum)?;
            let a = model.quadratic_coefficient(&minimum)?;
            let profile = model.truncated_profile(&minimum, a)?;
            Ok((profile, Some(minimum.m0), Some(a)))
        }
    }
}

// ---------------------------------------------------------------------------
// model
// ---------------------------------------------------------------------------

pub fn model_gen(args: &ModelGenArgs) -> Result<(), Failure> {
    if args.coupling_min > args.coupling_max {
        return Err(Failure::Invalid(
            "--coupling-min exceeds --coupling-max".into(),
        ));
    }
    let mut rng = from_seed(args.seed);
    let model = IsingModel::random(
        args.n,
        args.degree,
        (args.coupling_min, args.coupling_max),
        args.field_max,
        &mut rng,
    )?;
    let prov = Provenance::new("model gen", Some(args.seed))
        .param("n", args.n)
        .param("degree", args.degree)
        .param("coupling_min", args.coupling_min)
        .param("coupling_max", args.coupling_max)
        .param("field_max", args.field_max);
    guard(&args.out, args.force)?;
    let mut doc: Value =
        serde_json::from_str(&model_to_json(&model)).expect("model JSON always parses");
    doc["provenance"] = prov.json_value();
    let mut text = serde_json::to_string_pretty(&doc).expect("model JSON serializes");
    text.push('\n');
    fs::write(&args.out, text)?;
    println!(
        "wrote {} ({} spins, {} couplings, interaction width {:.4})",
        args.out.display(),
        model.n(),
        model.couplings().len(),
        model.interaction_width()
    );
    Ok(())
}

pub fn model_show(path: &Path) -> Result<(), Failure> {
    let model = read_model(path)?;
    let fields = model.fields();
    let (fmin, fmax) = fields
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), f| {
            (lo.min(*f), hi.max(*f))
        });
    println!("spins:             {}", model.n());
    println!("couplings:         {}", model.couplings().len());
    println!("interaction width: {:.6}", model.interaction_width());
    println!("fields:            [{fmin:.4}, {fmax:.4}]");
    if model.couplings().len() <= 24 {
        for (&(u, v), &w) in model.couplings() {
            println!("  ({u}, {v}): {w:.6}");
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// sample
// ---------------------------------------------------------------------------

fn start_config(start: StartState, n: usize, seed: u64) -> SpinConfiguration {
    match start {
        StartState::AllUp => SpinConfiguration::all_up(n),
        StartState::AllDown => SpinConfiguration::all_down(n),
        StartState::Random => SpinConfiguration::random(n, &mut from_seed(child_seed(seed, 1))),
    }
}

fn start_name(start: StartState) -> &'static str {
    match start {
        StartState::AllUp => "all-up",
        StartState::AllDown => "all-down",
        StartState::Random => "random",
    }
}

fn write_samples(
    set: &SampleSet,
    format: FileFormat,
    out: &Path,
    force: bool,
    prov: &Provenance,
) -> Result<(), Failure> {
    guard(out, force)?;
    match format {
        FileFormat::Text => set.write_text(out)?,
        FileFormat::Binary => {
            // The packed layout has no header; echo the provenance instead.
            set.write_binary(out)?;
            print!("{}", prov.csv_header());
        }
    }
    let mags = set.magnetizations();
    let mean = if mags.is_empty() {
        0.0
    } else {
        mags.iter().sum::<f64>() / mags.len() as f64
    };
    println!(
        "wrote {} samples to {} (mean magnetization {:.4})",
        set.len(),
        out.display(),
        mean
    );
    Ok(())
}

pub fn sample_chain(choice: ChainChoice, args: &ChainSampleArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let n = model.n();
    let start = start_config(args.start, n, args.seed);
    let kind = match choice {
        ChainChoice::Glauber => ChainKind::Glauber,
        ChainChoice::Metropolis => ChainKind::Metropolis,
    };
    let run = run_chain(
        &model,
        kind,
        &start,
        args.steps,
        args.burn_in,
        args.thinning,
        args.seed,
    )?;
    let prov = Provenance::new(&format!("sample {}", chain_name(choice)), Some(args.seed))
        .param("model", args.model.display())
        .param("steps", args.steps)
        .param("burn_in", args.burn_in)
        .param("thinning", args.thinning)
        .param("start", start_name(args.start));
    let labeled = SampleSet::new(n, args.seed, prov.label(), run.configs().to_vec())?;
    write_samples(&labeled, args.format, &args.out, args.force, &prov)
}

pub fn sample_exact_cw(args: &ExactCwArgs) -> Result<(), Failure> {
    let model = CurieWeiss::new(args.n, args.j, args.h)?;
    let (profile, _, _) = family_profile(&model, args.family)?;
    let dist = MagnetizationDistribution::from_profile(&model, &profile)?;
    let prov = Provenance::new("sample exact-cw", Some(args.seed))
        .param("n", args.n)
        .param("J", args.j)
        .param("h", args.h)
        .param("family", family_name(args.family))
        .param("m", args.m);
    let set = dist.sample(args.m, args.seed, &prov.label())?;
    write_samples(&set, args.format, &args.out, args.force, &prov)
}

// ---------------------------------------------------------------------------
// metastability
// ---------------------------------------------------------------------------

fn parse_restriction(spec: &str, n: usize, mu: &DenseDistribution) -> Result<StateSet, Failure> {
    let states = mu.num_states();
    if spec == "majority" {
        return Ok(StateSet::from_predicate(states, |s| {
            2 * (s.count_ones() as usize) > n
        }));
    }
    if spec == "mode" {
        let star = (0..states)
            .max_by(|a, b| mu.prob(*a).partial_cmp(&mu.prob(*b)).unwrap())
            .expect("distributions are non-empty");
        return Ok(StateSet::from_predicate(states, move |s| {
            2 * (n - (s ^ star).count_ones() as usize) > n
        }));
    }
    if let Some(rest) = spec.strip_prefix("count-ge:") {
        let k: usize = rest.parse().map_err(|_| {
            Failure::Invalid(format!("--restrict count-ge:<k>: '{rest}' is not a count"))
        })?;
        if k > n {
            return Err(Failure::Invalid(format!(
                "--restrict count-ge:{k} is empty for {n} spins"
            )));
        }
        return Ok(StateSet::from_predicate(states, move |s| {
            s.count_ones() as usize >= k
        }));
    }
    Err(Failure::Invalid(format!(
        "--restrict: unknown set '{spec}' (expected majority | mode | count-ge:<k>)"
    )))
}

fn empirical_distribution(
    samples: &SampleSet,
    model: &IsingModel,
) -> Result<DenseDistribution, Failure> {
    if samples.n() != model.n() {
        return Err(Failure::Invalid(format!(
            "--samples has {} spins but --model has {}",
            samples.n(),
            model.n()
        )));
    }
    if samples.is_empty() {
        return Err(Failure::Invalid("--samples: the sample file is empty".into()));
    }
    let mut weights = vec![0.0; 1usize << model.n()];
    for c in samples.configs() {
        weights[c.index()] += 1.0;
    }
    Ok(DenseDistribution::from_weights(model.n(), weights)?)
}

pub fn defect(strong: bool, args: &crate::DefectArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let kernel = kernel_for(args.chain, &model);
    let mu = model.gibbs_distribution()?;
    let (nu, source) = match (&args.restrict, &args.samples) {
        (Some(spec), None) => {
            let set = parse_restriction(spec, model.n(), &mu)?;
            (restricted_distribution(&mu, &set)?, format!("restrict:{spec}"))
        }
        (None, Some(path)) => {
            let samples = SampleSet::read_auto(path)?;
            (
                empirical_distribution(&samples, &model)?,
                format!("samples:{}", path.display()),
            )
        }
        _ => {
            return Err(Failure::Invalid(
                "pick the measured distribution with --restrict or --samples".into(),
            ))
        }
    };
    let kind = if strong { "strong" } else { "weak" };
    let eta = if strong {
        kernel.strong_metastability(&nu)?
    } else {
        kernel.weak_metastability(&nu)?
    };
    let prov = Provenance::new(&format!("metastability {kind}"), None)
        .param("model", args.model.display())
        .param("chain", chain_name(args.chain))
        .param("distribution", &source);
    let payload = json!({
        "kind": kind,
        "eta": eta,
        "omega": kernel.omega_p(),
        "eta_over_omega": eta / kernel.omega_p(),
        "tv_to_stationary": nu.tv_distance(&mu)?,
        "n": model.n(),
        "chain": chain_name(args.chain),
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

pub fn conductance(args: &crate::ConductanceArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let kernel = kernel_for(args.chain, &model);
    let table = kernel.table()?;
    let mu = model.gibbs_distribution()?;
    let prov = Provenance::new("metastability conductance", None)
        .param("model", args.model.display())
        .param("chain", chain_name(args.chain))
        .param("set", args.restrict.as_deref().unwrap_or("(bottleneck)"));
    let payload = match &args.restrict {
        Some(spec) => {
            let set = parse_restriction(spec, model.n(), &mu)?;
            let gamma = set_conductance(table, mu.probs(), &set)?;
            let mass: f64 = (0..mu.num_states())
                .filter(|s| set.contains(*s))
                .map(|s| mu.prob(s))
                .sum();
            json!({ "conductance": gamma, "set": spec, "set_mass": mass, "n": model.n() })
        }
        None => {
            let gamma = chain_conductance(table, mu.probs())?;
            json!({
                "conductance": gamma,
                "minimized_over": "sets of stationary mass ≤ 1/2",
                "n": model.n(),
            })
        }
    };
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

pub fn gap(args: &crate::GapArgs) -> Result<(), Failure> {
    let model = read_model(&args.model)?;
    let kernel = kernel_for(args.chain, &model);
    let mu = model.gibbs_distribution()?;
    let gap = spectral_gap(kernel.table()?, mu.probs())?;
    let prov = Provenance::new("metastability gap", None)
        .param("model", args.model.display())
        .param("chain", chain_name(args.chain));
    let payload = json!({ "gap": gap, "n": model.n(), "chain": chain_name(args.chain) });
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

// ---------------------------------------------------------------------------
// cw
// ---------------------------------------------------------------------------

pub struct CwCommon {
    pub n: usize,
    pub j: f64,
    pub h: f64,
}

impl CwCommon {
    fn model(&self) -> Result<CurieWeiss, Failure> {
        Ok(CurieWeiss::new(self.n, self.j, self.h)?)
    }

    fn provenance(&self, command: &str) -> Provenance {
        Provenance::new(command, None)
            .param("n", self.n)
            .param("J", self.j)
            .param("h", self.h)
    }
}

pub fn cw_free_energy(common: &CwCommon, out: Option<&Path>, force: bool) -> Result<(), Failure> {
    let model = common.model()?;
    let dist = model.class_distribution();
    let rows: Vec<String> = (0..=common.n)
        .map(|k| {
            format!(
                "{k},{},{},{}",
                msl_core::cw::level(common.n, k),
                model.free_energy_at(k),
                dist.class_prob(k)
            )
        })
        .collect();
    emit_csv(
        out,
        force,
        &common.provenance("cw free-energy"),
        "k,m,free_energy,class_prob",
        &rows,
    )
}

pub fn cw_m0(common: &CwCommon, out: Option<&Path>, force: bool) -> Result<(), Failure> {
    let model = common.model()?;
    let minimum = model.positive_minimum().map_err(|err| {
        Failure::Invalid(format!(
            "no positive-side free-energy minimum at J={}, h={}: {err}",
            common.j, common.h
        ))
    })?;
    let payload = json!({
        "index": minimum.index,
        "m0": minimum.m0,
        "continuous_root": minimum.continuous,
        "quadratic_coefficient": model.quadratic_coefficient(&minimum).ok(),
        "free_energy": model.free_energy_at(minimum.index),
    });
    emit_json(out, force, &common.provenance("cw m0"), payload)
}

pub fn cw_eta_scan(
    common: &CwCommon,
    family: ProfileFamily,
    min_n: usize,
    out: Option<&Path>,
    force: bool,
) -> Result<(), Failure> {
    if min_n < 2 {
        return Err(Failure::Invalid("--min-n must be at least 2".into()));
    }
    if min_n > common.n {
        return Err(Failure::Invalid(format!(
            "--min-n {} exceeds --n {}",
            min_n, common.n
        )));
    }
    let mut sizes = Vec::new();
    let mut size = min_n;
    while size <= common.n {
        sizes.push(size);
        size *= 2;
    }
    let mut rows = Vec::new();
    let mut log_n = Vec::new();
    let mut log_eta = Vec::new();
    for &n in &sizes {
        let model = CurieWeiss::new(n, common.j, common.h)?;
        let (profile, m0, coeff) = family_profile(&model, family)?;
        let dist = MagnetizationDistribution::from_profile(&model, &profile)?;
        let eta_s = strong_eta(&model, &dist)?;
        let eta_w = weak_eta(&model, &dist)?;
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        rows.push(format!(
            "{n},{},{},{},{},{},{eta_s},{eta_w}",
            common.j,
            common.h,
            family_name(family),
            opt(m0),
            opt(coeff)
        ));
        if eta_s > 0.0 {
            log_n.push((n as f64).ln());
            log_eta.push(eta_s.ln());
        }
    }
    let prov = common
        .provenance("cw eta-scan")
        .param("family", family_name(family))
        .param("min_n", min_n);
    emit_csv(
        out,
        force,
        &prov,
        "n,J,h,family,m0,coefficient,eta_strong,eta_weak",
        &rows,
    )?;
    if log_n.len() >= 2 {
        println!(
            "log-log slope of eta_strong vs n: {:.4}",
            ols_slope(&log_n, &log_eta)
        );
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// learn
// ---------------------------------------------------------------------------

fn load_weighted(path: &Path) -> Result<(SampleSet, WeightedConfigs), Failure> {
    let samples = SampleSet::read_auto(path)?;
    let data = WeightedConfigs::from_samples(&samples)?;
    Ok((samples, data))
}

fn symmetrized_couplings(estimate: &msl_core::learner::PLEstimate) -> Vec<Value> {
    let n = estimate.n();
    let mut out = Vec::with_capacity(n * (n - 1) / 2);
    for u in 0..n {
        for v in (u + 1)..n {
            let w = 0.5 * (estimate.coupling(u, v) + estimate.coupling(v, u));
            out.push(json!([u, v, w]));
        }
    }
    out
}

pub fn learn_fit(args: &FitArgs) -> Result<(), Failure> {
    if !(args.radius > 0.0 && args.radius.is_finite()) {
        return Err(Failure::Invalid("--radius must be positive and finite".into()));
    }
    if !(args.tol > 0.0) {
        return Err(Failure::Invalid("--tol must be positive".into()));
    }
    let (samples, data) = load_weighted(&args.samples)?;
    let options = FitOptions {
        radius: args.radius,
        max_iters: args.max_iters,
        tol: args.tol,
    };
    let estimate = fit_all(&data, &options)?;
    let nodes: Vec<Value> = estimate
        .nodes()
        .iter()
        .map(|f| {
            json!({
                "node": f.node,
                "loss": f.loss,
                "iterations": f.iterations,
                "converged": f.converged,
            })
        })
        .collect();
    let prov = Provenance::new("learn fit", None)
        .param("samples", args.samples.display())
        .param("radius", args.radius)
        .param("max_iters", args.max_iters)
        .param("tol", args.tol);
    let payload = json!({
        "n": estimate.n(),
        "samples": samples.len(),
        "radius": args.radius,
        "fields": (0..estimate.n()).map(|u| estimate.field(u)).collect::<Vec<_>>(),
        "couplings": symmetrized_couplings(&estimate),
        "nodes": nodes,
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

pub fn learn_structure(args: &StructureArgs) -> Result<(), Failure> {
    if !(args.radius > 0.0 && args.radius.is_finite()) {
        return Err(Failure::Invalid("--radius must be positive and finite".into()));
    }
    if !(args.alpha > 0.0) {
        return Err(Failure::Invalid("--alpha must be positive".into()));
    }
    let (samples, data) = load_weighted(&args.samples)?;
    let estimate = fit_all(&data, &FitOptions::new(args.radius))?;
    let edges: Vec<Value> = structure_threshold(&estimate, args.alpha)
        .into_iter()
        .map(|(u, v)| {
            let w = 0.5 * (estimate.coupling(u, v) + estimate.coupling(v, u));
            json!([u, v, w])
        })
        .collect();
    let prov = Provenance::new("learn structure", None)
        .param("samples", args.samples.display())
        .param("radius", args.radius)
        .param("alpha", args.alpha);
    let payload = json!({
        "n": estimate.n(),
        "samples": samples.len(),
        "alpha": args.alpha,
        "threshold": args.alpha / 2.0,
        "edge_count": edges.len(),
        "edges": edges,
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

pub fn learn_fields(args: &FieldsArgs) -> Result<(), Failure> {
    let (samples, data) = load_weighted(&args.samples)?;
    let model = read_model(&args.model)?;
    let fields = fit_fields(&data, &model, args.h_max)?;
    let prov = Provenance::new("learn fields", None)
        .param("samples", args.samples.display())
        .param("model", args.model.display())
        .param("h_max", args.h_max);
    let payload = json!({
        "n": model.n(),
        "samples": samples.len(),
        "h_max": args.h_max,
        "fields": fields,
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)
}

pub fn learn_grid(mle: bool, args: &GridLearnArgs) -> Result<(), Failure> {
    let samples = SampleSet::read_auto(&args.samples)?;
    if samples.is_empty() {
        return Err(Failure::Invalid("--samples: the sample file is empty".into()));
    }
    let weights = magnetization_histogram(&samples);
    let js = grid_points(args.j_min, args.j_max, args.j_step)
        .map_err(|e| Failure::Invalid(format!("--j-min/--j-max/--j-step: {e}")))?;
    let hs = grid_points(args.h_min, args.h_max, args.h_step)
        .map_err(|e| Failure::Invalid(format!("--h-min/--h-max/--h-step: {e}")))?;
    let estimator = if mle { "mle" } else { "pl" };
    let fit = if mle {
        mle_grid_cw(samples.n(), &weights, &js, &hs)?
    } else {
        pl_grid_cw(samples.n(), &weights, &js, &hs)?
    };
    let prov = Provenance::new(&format!("learn grid-{estimator}"), None)
        .param("samples", args.samples.display())
        .param("j_grid", format!("[{},{}]:{}", args.j_min, args.j_max, args.j_step))
        .param("h_grid", format!("[{},{}]:{}", args.h_min, args.h_max, args.h_step));
    if let Some(surface) = &args.surface {
        let mut rows = Vec::with_capacity(js.len() * hs.len());
        for (i, j) in js.iter().enumerate() {
            for (l, h) in hs.iter().enumerate() {
                rows.push(format!("{j},{h},{}", fit.values[i][l]));
            }
        }
        emit_csv(Some(surface), args.force, &prov, "J,h,value", &rows)?;
    }
    let payload = json!({
        "estimator": estimator,
        "n": samples.n(),
        "samples": samples.len(),
        "j_hat": fit.j_hat,
        "h_hat": fit.h_hat,
        "j_grid": { "min": args.j_min, "max": args.j_max, "step": args.j_step, "count": js.len() },
        "h_grid": { "min": args.h_min, "max": args.h_max, "step": args.h_step, "count": hs.len() },
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)?;
    if args.out.is_some() {
        println!("{estimator} argmin: J = {}, h = {}", fit.j_hat, fit.h_hat);
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

pub fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let reports = standard_suite_capped(args.seed, args.max_n)?;
    let mut failing = Vec::new();
    for report in &reports {
        println!(
            "{}: {} ({} instances, worst slack {:.3e})",
            report.check,
            if report.pass { "pass" } else { "VIOLATED" },
            report.instances,
            report.worst_slack
        );
        if !report.pass {
            failing.push(report.check.clone());
        }
    }
    let prov = Provenance::new("verify", Some(args.seed)).param("max_n", args.max_n);
    let payload = json!({
        "pass": failing.is_empty(),
        "max_n": args.max_n,
        "checks": reports.len(),
        "reports": reports
            .iter()
            .map(|r| serde_json::to_value(r.clone().truncated(20)).expect("reports serialize"))
            .collect::<Vec<_>>(),
    });
    emit_json(args.out.as_deref(), args.force, &prov, payload)?;
    if !failing.is_empty() {
        return Err(Failure::Verification(format!(
            "inequality checks violated: {}",
            failing.join(", ")
        )));
    }
    Ok(())
}
