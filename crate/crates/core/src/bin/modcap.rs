use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use modcap::acceptance;
use modcap::curves::ParametricCurve;
use modcap::duality::{check_duality, check_optimality_conditions, solve_content};
use modcap::error::{Error, Result};
use modcap::gradients::{check_w1p_pair, modulus_of_violating_family, NEGLIGIBLE_PROBABILITY};
use modcap::io::{emit_results, format_real, generate_random_instance, Format, Instance, ResultRecord};
use modcap::measure::{DiscreteMeasure, FamilyKind};
use modcap::modulus::{conjugate, saturated_subfamily, solve_family, SolverOptions};
use modcap::plans::{improve_barycenter, stretch_average, testplan_check, CurvePlan};
use modcap::space::Support;

/// p-modulus and p-content of measure and curve families on discrete metric measure spaces.
#[derive(Parser)]
#[command(name = "modcap", version)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Instance file (JSON).
    #[arg(long, global = true)]
    instance: Option<PathBuf>,
    /// Exponent p > 1; q = p/(p-1) where a q is needed.
    #[arg(long, global = true, default_value_t = 2.0)]
    p: f64,
    /// Overrides the feasibility, KKT and gap tolerances.
    #[arg(long, global = true)]
    tol: Option<f64>,
    #[arg(long, global = true)]
    max_iter: Option<usize>,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Csv)]
    format: OutputFormat,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutputFormat {
    Csv,
    Ndjson,
}

#[derive(Subcommand)]
enum Command {
    /// Modulus of a family.
    Solve {
        #[arg(long)]
        family: String,
    },
    /// Modulus and content of a family with their duality certificate.
    Duality {
        #[arg(long)]
        family: String,
        /// Write the optimal plan here.
        #[arg(long)]
        emit_plan: Option<PathBuf>,
    },
    /// Operations on one curve of the instance.
    Curve {
        #[command(subcommand)]
        op: CurveOp,
    },
    /// Operations on one plan of the instance.
    Plan {
        /// Dual exponent; defaults to p/(p-1).
        #[arg(long, global = true)]
        q: Option<f64>,
        #[command(subcommand)]
        op: PlanOp,
    },
    /// Upper-gradient checks.
    Grad {
        #[command(subcommand)]
        op: GradOp,
    },
    /// Random instance with one explicit family.
    Gen {
        #[arg(long, default_value_t = 20)]
        points: usize,
        #[arg(long, default_value_t = 5)]
        measures: usize,
        #[arg(long, default_value_t = 0.3)]
        sparsity: f64,
    },
    /// Runs the acceptance criteria.
    Selftest {
        /// Only these criteria.
        #[arg(long, value_delimiter = ',')]
        only: Vec<u8>,
    },
}

#[derive(Subcommand)]
enum CurveOp {
    /// Constant-speed representative.
    Resample {
        #[arg(long)]
        curve: String,
    },
    /// Arc-length measure.
    Jmap {
        #[arg(long)]
        curve: String,
        #[arg(long, value_enum, default_value_t = SupportArg::Nodes)]
        support: SupportArg,
    },
    /// Time-occupation measure.
    Mmap {
        #[arg(long)]
        curve: String,
    },
    /// Traversal count per edge.
    Mult {
        #[arg(long)]
        curve: String,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SupportArg {
    Nodes,
    Edges,
}

#[derive(Subcommand)]
enum PlanOp {
    /// Test-plan constant of a plan.
    Check {
        #[arg(long)]
        plan: String,
    },
    /// Reparameterizes the curves so the barycenter drops below 1/z.
    Improve {
        #[arg(long)]
        plan: String,
        #[arg(long)]
        eps: f64,
    },
    /// Averages time-shifted stretched copies of every curve.
    Stretch {
        #[arg(long)]
        plan: String,
        #[arg(long)]
        eps: f64,
        #[arg(long = "ntau", alias = "n-tau", default_value_t = 64)]
        n_tau: usize,
    },
}

#[derive(Subcommand)]
enum GradOp {
    /// Checks |f(end) - f(start)| <= ∫g along a family and under plans.
    Check {
        #[arg(long)]
        f: String,
        #[arg(long)]
        g: String,
        #[arg(long)]
        family: String,
        #[arg(long, value_delimiter = ',')]
        plans: Vec<String>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        json!(format_real(v))
    }
}

fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

fn measure_json(mu: &DiscreteMeasure) -> Value {
    Value::Array(mu.iter().map(|(x, w)| json!([x, num(w)])).collect())
}

impl Global {
    fn options(&self) -> Result<SolverOptions> {
        let mut o = SolverOptions::default();
        if let Some(t) = self.tol {
            o.feas_tol = t;
            o.kkt_tol = t;
            o.gap_tol = t;
        }
        if let Some(m) = self.max_iter {
            o.max_iter = m;
        }
        o.validate()?;
        Ok(o)
    }

    fn load(&self) -> Result<Instance> {
        let path = self
            .instance
            .as_deref()
            .ok_or_else(|| Error::InvalidArgument("--instance is required".into()))?;
        Instance::load(path)
    }

    fn format(&self) -> Format {
        match self.format {
            OutputFormat::Csv => Format::Csv,
            OutputFormat::Ndjson => Format::Ndjson,
        }
    }

    fn instance_label(&self, inst: &Instance) -> String {
        inst.name.clone().unwrap_or_else(|| {
            self.instance.as_deref().map(|p| p.display().to_string()).unwrap_or_default()
        })
    }

    fn write_text(&self, text: &str) -> Result<()> {
        match &self.out {
            Some(p) => std::fs::write(p, text)?,
            None => print!("{text}"),
        }
        Ok(())
    }

    fn write_json(&self, mut v: Value) -> Result<()> {
        if let Value::Object(map) = &mut v {
            map.insert("seed".into(), json!(self.seed));
        }
        let mut text = serde_json::to_string_pretty(&v)?;
        text.push('\n');
        self.write_text(&text)
    }
}

fn run(cli: &Cli) -> Result<u8> {
    let g = &cli.global;
    match &cli.command {
        Command::Solve { family } => solve(g, family),
        Command::Duality { family, emit_plan } => duality(g, family, emit_plan.as_deref()),
        Command::Curve { op } => curve(g, op),
        Command::Plan { q, op } => plan(g, *q, op),
        Command::Grad { op: GradOp::Check { f, g: gcol, family, plans } } => grad_check(g, f, gcol, family, plans),
        Command::Gen { points, measures, sparsity } => {
            let inst = generate_random_instance(g.seed, *points, *measures, *sparsity)?;
            g.write_text(&inst.to_json())?;
            Ok(0)
        }
        Command::Selftest { only } => {
            let mut failed = 0;
            for (id, _) in acceptance::CRITERIA {
                if !only.is_empty() && !only.contains(&id) {
                    continue;
                }
                let r = acceptance::run_criterion(id);
                println!("{r}");
                failed += !r.passed as usize;
            }
            println!("seed {}: {failed} criteria failed", g.seed);
            Ok(if failed == 0 { 0 } else { 4 })
        }
    }
}

fn solve(g: &Global, family: &str) -> Result<u8> {
    let inst = g.load()?;
    let opts = g.options()?;
    let fam = inst.family(family)?;
    let start = Instant::now();
    let sol = solve_family(&inst.space, fam, g.p, &opts)?;
    let wall_ms = start.elapsed().as_secs_f64() * 1e3;
    for w in &sol.solution.flags.warnings {
        eprintln!("warning: {w}");
    }
    let record = ResultRecord {
        instance: g.instance_label(&inst),
        family: family.to_string(),
        p: g.p,
        value: sol.solution.value,
        dual_value: sol.solution.dual_value,
        gap: sol.solution.gap,
        iters: sol.solution.iterations,
        wall_ms,
        seed: g.seed,
    };
    emit_results(&[record], g.format(), g.out.as_deref())?;
    Ok(0)
}

fn duality(g: &Global, family: &str, emit_plan: Option<&Path>) -> Result<u8> {
    let inst = g.load()?;
    let opts = g.options()?;
    let fam = inst.family(family)?;
    let sol = solve_family(&inst.space, fam, g.p, &opts)?;
    let reference = inst.space.reference(sol.support);
    let reference = match &fam.kind {
        FamilyKind::Curves { map: modcap::measure::CurveMap::M, .. } => inst.space.measure(),
        _ => reference,
    };
    let content = solve_content(reference, &sol.measures, conjugate(g.p), &opts)?;
    let optimality = check_optimality_conditions(reference, &sol.measures, &sol.solution.f, &content, g.p, 1e-6)?;
    let cert = check_duality(&sol.solution, &content, g.p);
    if let Some(path) = emit_plan {
        write_plan(&inst, &sol.measures, sol.curves.as_deref(), &content.probabilities, path)?;
    }
    let saturated = saturated_subfamily(&sol.solution, &sol.measures, 1e-6);
    let report = json!({
        "family": family,
        "p": g.p,
        "modulus": num(sol.solution.value),
        "modulus_root": num(sol.solution.value.powf(1.0 / g.p)),
        "content": num(content.value),
        "content_upper_bound": num(content.upper_bound),
        "members": sol.measures.len(),
        "saturated": saturated,
        "charged": content.charged(),
        "saturation_residual": num(optimality.saturation),
        "barycenter_residual": num(optimality.barycenter),
        "duality": match &cert { Ok(_) => "ok".to_string(), Err(e) => e.to_string() },
        "optimality": if optimality.passed() { vec!["ok".to_string()] } else { optimality.violations.clone() },
    });
    g.write_json(report)?;
    cert?;
    if !optimality.passed() {
        return Err(Error::CertificateFailed(optimality.violations.join("; ")));
    }
    Ok(0)
}

// Curve families become an instance holding the optimal plan; explicit
// families a list of charged members with their probabilities.
fn write_plan(
    inst: &Instance,
    measures: &[DiscreteMeasure],
    curves: Option<&[ParametricCurve]>,
    probabilities: &[f64],
    path: &Path,
) -> Result<()> {
    let charged: Vec<usize> = (0..probabilities.len()).filter(|&i| probabilities[i] > 1e-10).collect();
    let total: f64 = charged.iter().map(|&i| probabilities[i]).sum();
    let probs: Vec<f64> = charged.iter().map(|&i| probabilities[i] / total).collect();
    match curves {
        Some(cs) => {
            let plan = CurvePlan::new(charged.iter().map(|&i| cs[i].clone()).collect(), probs)?;
            let out = Instance {
                name: inst.name.clone(),
                space: inst.space.clone(),
                families: Vec::new(),
                curves: Vec::new(),
                plans: vec![("optimal".into(), plan)],
                columns: BTreeMap::new(),
            };
            out.save(path)
        }
        None => {
            let v = json!({
                "members": charged,
                "measures": charged.iter().map(|&i| measure_json(&measures[i])).collect::<Vec<_>>(),
                "probs": nums(&probs),
            });
            std::fs::write(path, serde_json::to_string_pretty(&v)? + "\n")?;
            Ok(())
        }
    }
}

fn curve(g: &Global, op: &CurveOp) -> Result<u8> {
    let inst = g.load()?;
    let rows = |mu: &DiscreteMeasure, key: &str| -> String {
        let mut s = format!("{key},weight\n");
        for (x, w) in mu.iter() {
            s.push_str(&format!("{x},{}\n", format_real(w)));
        }
        s
    };
    match op {
        CurveOp::Resample { curve } => {
            let k = inst.curve(curve)?.constant_speed_reparam()?;
            let out = Instance {
                name: inst.name.clone(),
                space: inst.space.clone(),
                families: Vec::new(),
                curves: vec![(format!("{curve}-resampled"), k.into_curve())],
                plans: Vec::new(),
                columns: BTreeMap::new(),
            };
            g.write_text(&out.to_json())?;
        }
        CurveOp::Jmap { curve, support } => {
            let support = match support {
                SupportArg::Nodes => Support::Nodes,
                SupportArg::Edges => Support::Edges,
            };
            let key = if support == Support::Nodes { "point" } else { "edge" };
            g.write_text(&rows(&inst.curve(curve)?.j_measure(support), key))?;
        }
        CurveOp::Mmap { curve } => g.write_text(&rows(&inst.curve(curve)?.m_map(), "point"))?,
        CurveOp::Mult { curve } => {
            let mut s = String::from("edge,u,v,multiplicity\n");
            for (e, m) in inst.curve(curve)?.multiplicity() {
                let edge = inst.space.edge(e);
                s.push_str(&format!("{e},{},{},{}\n", edge.u, edge.v, format_real(m)));
            }
            g.write_text(&s)?;
        }
    }
    Ok(0)
}

fn plan(g: &Global, q: Option<f64>, op: &PlanOp) -> Result<u8> {
    let inst = g.load()?;
    let m = inst.space.measure();
    let q = q.unwrap_or_else(|| conjugate(g.p));
    if !(q > 1.0 && q.is_finite()) {
        return Err(Error::InvalidArgument(format!("q must be in (1, inf), got {q}")));
    }
    let save_plan = |name: &str, plan: CurvePlan| -> Result<Option<String>> {
        let Some(path) = &g.out else { return Ok(None) };
        let out = Instance {
            name: inst.name.clone(),
            space: inst.space.clone(),
            families: Vec::new(),
            curves: Vec::new(),
            plans: vec![(name.to_string(), plan)],
            columns: BTreeMap::new(),
        };
        out.save(path)?;
        Ok(Some(path.display().to_string()))
    };
    let report = match op {
        PlanOp::Check { plan } => {
            let r = testplan_check(inst.plan(plan)?, m);
            json!({
                "plan": plan,
                "is_test_plan": r.is_test_plan,
                "c_min": num(r.c_min),
                "time": r.time,
                "point": r.point,
            })
        }
        PlanOp::Improve { plan, eps } => {
            let r = improve_barycenter(inst.plan(plan)?, m, q, *eps)?;
            let report = json!({
                "plan": plan,
                "q": q,
                "eps": eps,
                "z": num(r.z),
                "barycenter_sup": num(r.barycenter_sup),
                "one_over_z": num(1.0 / r.z),
                "energy": num(r.energy),
                "energy_bound": num(r.energy_bound),
                "energy_bound_discrete": num(r.energy_bound_discrete),
                "exact": r.exact,
            });
            let written = save_plan(&format!("{plan}-improved"), r.plan)?;
            if written.is_some() {
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(0);
            }
            report
        }
        PlanOp::Stretch { plan, eps, n_tau } => {
            let r = stretch_average(inst.plan(plan)?, m, *eps, *n_tau)?;
            let report = json!({
                "plan": plan,
                "eps": eps,
                "n_tau": n_tau,
                "c_input": num(r.c_input),
                "bound": num(r.bound),
                "correction": num(r.correction),
                "c_min": num(r.c_min),
                "curves": r.plan.len(),
            });
            let written = save_plan(&format!("{plan}-stretched"), r.plan)?;
            if written.is_some() {
                println!("{}", serde_json::to_string_pretty(&report)?);
                return Ok(0);
            }
            report
        }
    };
    g.write_json(report)?;
    Ok(0)
}

fn grad_check(g: &Global, fcol: &str, gcol: &str, family: &str, plans: &[String]) -> Result<u8> {
    let inst = g.load()?;
    let opts = g.options()?;
    let f = inst.column(fcol)?;
    let gv = inst.column(gcol)?;
    if let Some(x) = gv.iter().position(|v| !(*v >= 0.0)) {
        return Err(Error::Instance(format!("column '{gcol}' must be nonnegative (point {x})")));
    }
    let fam = inst.family(family)?;
    let r = modulus_of_violating_family(&inst.space, f, gv, fam, g.p, &opts)?;
    let chosen = plans.iter().map(|n| inst.plan(n).cloned()).collect::<Result<Vec<_>>>()?;
    let w = check_w1p_pair(f, gv, &chosen, inst.space.measure(), NEGLIGIBLE_PROBABILITY);
    for warning in &w.warnings {
        eprintln!("warning: {warning}");
    }
    let per_plan: Vec<Value> = plans
        .iter()
        .zip(&w.plans)
        .map(|(name, v)| {
            json!({
                "plan": name,
                "violating_probability": num(v.probability),
                "is_test_plan": v.test_plan.is_test_plan,
                "c_min": num(v.test_plan.c_min),
            })
        })
        .collect();
    g.write_json(json!({
        "family": family,
        "p": g.p,
        "curves": r.n_curves,
        "violations": r.n_violations,
        "violating": r.violating,
        "worst_residual": num(r.worst_residual),
        "modulus_of_violations": num(r.modulus_of_violations.unwrap_or(f64::NAN)),
        "plans": per_plan,
        "plans_passed": w.passed,
    }))?;
    Ok(0)
}
