use std::fmt::Write as _;
use std::path::Path;

use clap::ValueEnum;
use conewalk::catalog::{table1, COLUMNS};
use conewalk::distributions::HypothesisReport;
use conewalk::geometry::extremal_directions;
use conewalk::model::{ModelFile, ModelSpec};
use conewalk::montecarlo::{survival_mc, McConfig};
use conewalk::oracle_dp::{
    extract_rate, survival_dp, survival_limit_estimate, LatticeModel, LimitEstimate, RateEstimate,
    SurvivalCurve,
};
use conewalk::rate::{closed_form_gaussian, gaussian_sector_model, ClosedFormError};
use conewalk::rate::{compute_rate_with, Branch, RateOptions, RateReport};
use serde::Serialize;
use serde_json::json;

use crate::error::{CliError, EXIT_NUMERIC, EXIT_VALIDATION};
use crate::report::{opt, vector, Report};

/// Largest `|Δ|` tolerated against a built-in closed form.
pub const TABLE_TOL: f64 = 1e-9;
/// Largest `|Δ|` tolerated between the Gaussian closed form and the solver.
pub const GAUSSIAN_TOL: f64 = 1e-6;

fn hypothesis_line(h: &HypothesisReport) -> String {
    let mark = |ok: bool| if ok { "ok" } else { "FAIL" };
    let a3 = match (h.a3_reach_interior, h.a3_steps) {
        (true, Some(1)) => "ok (1 step)".to_string(),
        (true, Some(k)) => format!("ok ({k} steps)"),
        _ => mark(false).to_string(),
    };
    format!(
        "A1 {}, A2 {}, A3 {a3}, A4 {}, A5 {}",
        mark(h.a1_cone),
        mark(h.a2_dimension),
        mark(h.a4_exponential_moments),
        mark(h.a5_not_trapped)
    )
}

pub fn rate(path: &Path, opts: &RateOptions) -> Result<Report, CliError> {
    let spec = ModelSpec::load(path)?;
    let r = compute_rate_with(&spec.distribution, &spec.pyramid, opts)?;
    let mut report = Report::new("rate", Some(spec.hash.clone()), &r);
    report.text = rate_text(spec.name(), &r);
    report.csv = rate_csv(&r);
    Ok(report)
}

fn rate_text(name: Option<&str>, r: &RateReport) -> String {
    let mut t = String::new();
    if let Some(name) = name {
        writeln!(t, "model       {name}").unwrap();
    }
    writeln!(t, "drift       {} ({:?})", vector(&r.drift), r.drift_class).unwrap();
    writeln!(t, "hypotheses  {}", hypothesis_line(&r.hypotheses)).unwrap();
    match r.branch {
        Branch::MaxOverDirections => {
            writeln!(t, "branch      max over directions with a negative root").unwrap();
            writeln!(t).unwrap();
            writeln!(
                t,
                "{:<4} {:<24} {:<9} {:<4} {:<20} rho_u",
                "#", "u", "extremal", "S'", "s_u"
            )
            .unwrap();
            for d in &r.records {
                writeln!(
                    t,
                    "{:<4} {:<24} {:<9} {:<4} {:<20} {}",
                    d.index,
                    vector(&d.u),
                    if d.extremal { "yes" } else { "no" },
                    if d.in_s_prime { "yes" } else { "no" },
                    opt(d.s_u()),
                    opt(d.rho_u())
                )
                .unwrap();
            }
            writeln!(t).unwrap();
        }
        Branch::DualConeMinimum => {
            writeln!(t, "branch      minimum of L over the dual cone").unwrap();
            if let Some(m) = &r.dual_minimum {
                writeln!(t, "minimizer   {}", vector(&m.zstar)).unwrap();
            }
        }
    }
    writeln!(t, "rho         {:.15}", r.rho).unwrap();
    if let Some(k) = r.argmax {
        writeln!(t, "argmax      {k}").unwrap();
    }
    t
}

fn rate_csv(r: &RateReport) -> String {
    let mut t = format!(
        "# rho {:.17e}\nindex,u,extremal,in_s_prime,s_u,rho_u\n",
        r.rho
    );
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.17e}")).unwrap_or_default();
    for d in &r.records {
        let u: Vec<String> = d.u.iter().map(|x| x.to_string()).collect();
        writeln!(
            t,
            "{},{},{},{},{},{}",
            d.index,
            u.join(" "),
            d.extremal,
            d.in_s_prime,
            cell(d.s_u()),
            cell(d.rho_u())
        )
        .unwrap();
    }
    t
}

#[derive(Serialize)]
struct TableCell {
    column: &'static str,
    computed: Option<f64>,
    reference: f64,
    formula: &'static str,
    delta: Option<f64>,
    ok: bool,
}

#[derive(Serialize)]
struct TableRow {
    row: usize,
    steps: Vec<[i64; 2]>,
    model_hash: String,
    cells: Vec<TableCell>,
}

pub fn table(opts: &RateOptions) -> Result<Report, CliError> {
    let mut rows = Vec::new();
    for m in table1() {
        let r = compute_rate_with(&m.distribution(), &m.pyramid(), opts)?;
        let (u, v) = (r.record_for(&[1.0, 0.0]), r.record_for(&[0.0, 1.0]));
        let computed = [
            u.and_then(|d| d.s_u()),
            u.and_then(|d| d.rho_u()),
            v.and_then(|d| d.s_u()),
            v.and_then(|d| d.rho_u()),
            Some(r.rho),
        ];
        let cells = COLUMNS
            .iter()
            .zip(computed)
            .zip(m.columns())
            .map(|((&column, computed), p)| {
                let delta = computed.map(|c| (c - p.value).abs());
                TableCell {
                    column,
                    computed,
                    reference: p.value,
                    formula: p.formula,
                    delta,
                    ok: delta.is_some_and(|d| d <= TABLE_TOL),
                }
            })
            .collect();
        rows.push(TableRow {
            row: m.row,
            steps: m.steps.clone(),
            model_hash: m.model_file().hash(),
            cells,
        });
    }
    let mismatches: usize = rows.iter().flat_map(|r| &r.cells).filter(|c| !c.ok).count();

    let mut text = format!("{:<4}", "row");
    for c in COLUMNS {
        write!(text, " {c:>18}").unwrap();
    }
    text.push('\n');
    let mut csv = String::from("row,column,computed,reference,formula,delta,ok\n");
    for r in &rows {
        write!(text, "{:<4}", r.row).unwrap();
        for c in &r.cells {
            let flag = if c.ok { ' ' } else { '*' };
            write!(text, " {:>17}{flag}", opt(c.computed)).unwrap();
            writeln!(
                csv,
                "{},{},{},{:.17e},{},{},{}",
                r.row,
                c.column,
                c.computed.map(|x| format!("{x:.17e}")).unwrap_or_default(),
                c.reference,
                c.formula,
                c.delta.map(|x| format!("{x:.3e}")).unwrap_or_default(),
                c.ok
            )
            .unwrap();
        }
        text.push('\n');
    }
    writeln!(text).unwrap();
    for r in &rows {
        for c in r.cells.iter().filter(|c| !c.ok) {
            writeln!(
                text,
                "* row {} {}: computed {}, reference {} = {:.15}",
                r.row,
                c.column,
                opt(c.computed),
                c.formula,
                c.reference
            )
            .unwrap();
        }
    }
    writeln!(
        text,
        "{mismatches} of {} entries differ by more than {TABLE_TOL:e}",
        rows.len() * 5
    )
    .unwrap();

    let result = json!({ "tolerance": TABLE_TOL, "mismatches": mismatches, "rows": rows });
    let mut report = Report::new("table1", None, result);
    report.text = text;
    report.csv = csv;
    if mismatches > 0 {
        report.status = EXIT_NUMERIC;
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Method {
    Dp,
    Mc,
}

pub struct SurvivalArgs<'a> {
    pub path: &'a Path,
    pub method: Method,
    pub horizon: usize,
    pub seed: u64,
    pub chains: u64,
}

#[derive(Serialize)]
struct Diagnostics {
    window: Option<(usize, usize)>,
    estimate: Option<RateEstimate>,
    estimate_error: Option<String>,
    limit: Option<LimitEstimate>,
    theory: Option<f64>,
    theory_error: Option<String>,
    relative_error: Option<f64>,
}

fn diagnostics(curve: &SurvivalCurve, theory: Result<f64, String>) -> Diagnostics {
    let n = curve.horizon();
    let window = (n >= 8).then_some((n / 4, n - 2));
    let estimate = match window {
        Some(w) => extract_rate(curve, w).map_err(|e| e.to_string()),
        None => Err("horizon too short for rate extraction".to_string()),
    };
    let relative_error = match (&estimate, &theory) {
        (Ok(e), Ok(rho)) => Some((e.rho_hat - rho).abs() / rho),
        _ => None,
    };
    let (theory, theory_error) = match theory {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e)),
    };
    let (estimate, estimate_error) = match estimate {
        Ok(v) => (Some(v), None),
        Err(e) => (None, Some(e)),
    };
    Diagnostics {
        window,
        estimate,
        estimate_error,
        limit: survival_limit_estimate(curve).ok(),
        theory,
        theory_error,
        relative_error,
    }
}

fn diagnostic_lines(d: &Diagnostics, prefix: &str) -> String {
    let mut t = String::new();
    match (&d.estimate, &d.estimate_error) {
        (Some(e), _) => {
            writeln!(t, "{prefix}rho_hat {:.12}", e.rho_hat).unwrap();
            writeln!(t, "{prefix}rho_raw {:.12}", e.rho_raw).unwrap();
            writeln!(t, "{prefix}period {}", e.period).unwrap();
            writeln!(t, "{prefix}window {} {}", e.window.0, e.window.1).unwrap();
            writeln!(t, "{prefix}ratios_monotone {}", e.ratios_monotone).unwrap();
        }
        (None, Some(err)) => writeln!(t, "{prefix}rho_hat unavailable: {err}").unwrap(),
        _ => {}
    }
    match (d.theory, &d.theory_error) {
        (Some(rho), _) => writeln!(t, "{prefix}rho_theory {rho:.12}").unwrap(),
        (None, Some(err)) => writeln!(t, "{prefix}rho_theory unavailable: {err}").unwrap(),
        _ => {}
    }
    if let Some(e) = d.relative_error {
        writeln!(t, "{prefix}relative_error {e:.3e}").unwrap();
    }
    if let Some(l) = d.limit {
        writeln!(
            t,
            "{prefix}survival_limit {:.12} (upper {:.12})",
            l.corrected, l.upper
        )
        .unwrap();
    }
    t
}

fn integer_start(start: &[f64]) -> Result<Vec<i64>, CliError> {
    start
        .iter()
        .map(|&v| {
            if v.fract() == 0.0 && v.abs() < 1e15 {
                Ok(v as i64)
            } else {
                Err(CliError::new(
                    "InvalidModel",
                    EXIT_VALIDATION,
                    format!("dp needs an integer start point, got {}", vector(start)),
                ))
            }
        })
        .collect()
}

pub fn survival(args: &SurvivalArgs, opts: &RateOptions) -> Result<Report, CliError> {
    let spec = ModelSpec::load(args.path)?;
    let (curve, csv, intervals) = match args.method {
        Method::Dp => {
            let model = LatticeModel::new(&spec.distribution, &spec.pyramid)?;
            let curve = survival_dp(&model, &integer_start(&spec.start)?, args.horizon)?;
            let csv = curve.to_csv(None);
            (curve, csv, None)
        }
        Method::Mc => {
            let cfg = McConfig {
                chains: args.chains,
                horizon: args.horizon,
                seed: args.seed,
                start: spec.start.clone(),
            };
            let mc = survival_mc(&spec.distribution, &spec.pyramid, &cfg)?;
            let csv = mc.to_csv();
            (mc.curve, csv, Some(mc.intervals))
        }
    };
    let theory = compute_rate_with(&spec.distribution, &spec.pyramid, opts)
        .map(|r| r.rho)
        .map_err(|e| e.to_string());
    let diag = diagnostics(&curve, theory);

    let method = match args.method {
        Method::Dp => "dp".to_string(),
        Method::Mc => format!("mc seed {} chains {}", args.seed, args.chains),
    };
    let mut text = format!(
        "method      {method}\nstart       {}\nhorizon     {}\nsurvival    {:.12}\n",
        vector(&spec.start),
        curve.horizon(),
        curve.values.last().copied().unwrap_or(1.0)
    );
    text.push_str(&diagnostic_lines(&diag, ""));
    let mut csv_doc = format!("# method {method}\n");
    csv_doc.push_str(&csv);
    csv_doc.push_str(&diagnostic_lines(&diag, "# "));

    let result = json!({
        "method": args.method.to_possible_value().map(|v| v.get_name().to_string()),
        "seed": (args.method == Method::Mc).then_some(args.seed),
        "chains": (args.method == Method::Mc).then_some(args.chains),
        "curve": curve,
        "intervals": intervals,
        "diagnostics": diag,
    });
    let mut report = Report::new("survival", Some(spec.hash), result);
    report.text = text;
    report.csv = csv_doc;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GeometryOp {
    Dual,
    Extremal,
    Interior,
    Project,
}

pub fn geometry(path: &Path, op: GeometryOp, point: Option<&[f64]>) -> Result<Report, CliError> {
    let spec = ModelSpec::load(path)?;
    let p = &spec.pyramid;
    let rows = |vs: &[Vec<f64>]| -> (String, String) {
        let text = vs.iter().map(|v| vector(v) + "\n").collect();
        let csv = vs
            .iter()
            .map(|v| {
                v.iter()
                    .map(|x| format!("{x:.17e}"))
                    .collect::<Vec<_>>()
                    .join(",")
                    + "\n"
            })
            .collect();
        (text, csv)
    };
    let (result, text, csv) = match op {
        GeometryOp::Dual => {
            let dual = p.dual();
            let (text, csv) = rows(dual.generators());
            (json!({ "generators": dual.generators() }), text, csv)
        }
        GeometryOp::Extremal => {
            let dual = p.dual();
            let ext = extremal_directions(&dual)
                .map_err(|e| CliError::new("InvalidModel", EXIT_VALIDATION, e.to_string()))?;
            let rays = dual.restrict(&ext.indices);
            let (text, csv) = rows(rays.generators());
            let text = format!("indices {:?}\n{text}", ext.indices);
            (
                json!({ "indices": ext.indices, "rays": rays.generators() }),
                text,
                csv,
            )
        }
        GeometryOp::Interior => {
            let x = p.interior_point().to_vec();
            let (text, csv) = rows(std::slice::from_ref(&x));
            (json!({ "point": x }), text, csv)
        }
        GeometryOp::Project => {
            let x = point.ok_or_else(|| CliError::usage("--op project needs --point"))?;
            if x.len() != p.dim() {
                return Err(CliError::usage(format!(
                    "--point has {} coordinates, the cone is {}-dimensional",
                    x.len(),
                    p.dim()
                )));
            }
            let proj = p.project(x);
            let distance = p.distance(x);
            let inside = p.contains(x, 1e-12);
            let text = format!(
                "point       {}\nprojection  {}\ndistance    {distance:.15}\ninside      {inside}\n",
                vector(x),
                vector(&proj)
            );
            let (_, csv) = rows(std::slice::from_ref(&proj));
            (
                json!({ "point": x, "projection": proj, "distance": distance, "inside": inside }),
                text,
                csv,
            )
        }
    };
    let mut report = Report::new("geometry", Some(spec.hash), result);
    report.text = text;
    report.csv = csv;
    Ok(report)
}

pub fn gaussian(alpha: f64, beta: f64, r: f64, opts: &RateOptions) -> Result<Report, CliError> {
    let domain = |e: ClosedFormError| CliError::new("DomainError", EXIT_VALIDATION, e.to_string());
    let closed = closed_form_gaussian(alpha, beta, r).map_err(domain)?;
    let (cone, law) = gaussian_sector_model(alpha, beta, r).map_err(domain)?;
    let numeric = compute_rate_with(&law, &cone, opts)?.rho;
    let delta = (numeric - closed.rho).abs();
    let hash = ModelFile::from_parts(None, &cone, &law).hash();

    let text = format!(
        "alpha       {alpha}\nbeta        {beta}\nr           {r}\ndistance    {:.15}\nclosed form {:.15}\nnumeric     {numeric:.15}\n|delta|     {delta:.3e}\n",
        closed.distance, closed.rho
    );
    let csv = format!(
        "alpha,beta,r,distance,closed_form,numeric,delta\n{alpha},{beta},{r},{:.17e},{:.17e},{numeric:.17e},{delta:.3e}\n",
        closed.distance, closed.rho
    );
    let result = json!({
        "alpha": alpha,
        "beta": beta,
        "r": r,
        "closed_form": closed,
        "numeric": numeric,
        "delta": delta,
        "tolerance": GAUSSIAN_TOL,
    });
    let mut report = Report::new("gaussian", Some(hash), result);
    report.text = text;
    report.csv = csv;
    if !(delta <= GAUSSIAN_TOL) {
        report.status = EXIT_NUMERIC;
    }
    Ok(report)
}
