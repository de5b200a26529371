use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::{json, Value};

use jsr_certify_core::families::{
    blondel_et_al, kozyakin, lagarias_wang, lagarias_wang_experiment, lagarias_wang_experiment_params,
    lagarias_wang_midpoint, Branch,
};
use jsr_certify_core::jsr::{gripenberg, GripenbergOptions};
use jsr_certify_core::polytope::{
    invariant_polytope_iterate, validate_polytope, InitMode, PolytopeCertificate, PolytopeOutcome,
};
use jsr_certify_core::quadratic::{
    cqlf, max_of_quadratics, min_of_quadratics, sweep_pieces, validate_quadratic, PiecewiseQuadraticCertificate,
    QuadKind, QuadOutcome,
};
use jsr_certify_core::sos::{min_sos_degree, sos_lyapunov_feasible, validate_sos, SosLyapunovCertificate, SosOutcome};
use jsr_certify_core::{Error, MatrixSet, Status};

use crate::output::{self, cell};
use crate::{
    BranchArg, CertifyCmd, CertifyPolytope, CertifyQuad, CertifySos, Cli, Command, FamilyCmd, FamilyGen, FamilyName,
    Format, InitArg, JsrCmd, KindArg, SweepCmd, SweepMinDegree, SweepPieces, TableCmd, TableSec5,
};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NONE: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_UNDETERMINED: u8 = 3;

const THREADS_VAR: &str = "JSR_CERTIFY_THREADS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("malformed input {file}: {msg}")]
    Malformed { file: String, msg: String },
    #[error("{0}")]
    Undetermined(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Malformed { .. } => EXIT_USAGE,
            CliError::Undetermined(_) => EXIT_UNDETERMINED,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Undetermined(msg) => CliError::Undetermined(msg),
            other => CliError::Usage(other.to_string()),
        }
    }
}

/// Sizes the global rayon pool from `JSR_CERTIFY_THREADS` (0 or unset: auto).
pub fn configure_threads() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_VAR) else { return Ok(()) };
    let n: usize = raw
        .trim()
        .parse()
        .map_err(|_| CliError::Usage(format!("{THREADS_VAR} must be a non-negative integer, got {raw:?}")))?;
    if n > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| malformed(path, &e))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))
}

fn malformed<E: std::fmt::Display>(path: &Path, e: &serde_path_to_error::Error<E>) -> CliError {
    let at = e.path().to_string();
    let at = if at == "." { "document root".to_string() } else { format!("field `{at}`") };
    CliError::Malformed { file: path.display().to_string(), msg: format!("at {at}: {}", e.inner()) }
}

/// A certificate file: either the bare certificate or a `certify` result
/// wrapping it under `"certificate"`.
fn read_certificate<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = read_text(path)?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let value: Value = serde_path_to_error::deserialize(de).map_err(|e| malformed(path, &e))?;
    let (value, prefix) = match value {
        Value::Object(mut map) if map.contains_key("certificate") => {
            (map.remove("certificate").unwrap_or(Value::Null), "certificate.")
        }
        v => (v, ""),
    };
    if value.is_null() {
        return Err(CliError::Malformed { file: path.display().to_string(), msg: "no certificate present".into() });
    }
    serde_path_to_error::deserialize(value).map_err(|e| {
        let at = e.path().to_string();
        let at = if at == "." { prefix.trim_end_matches('.').to_string() } else { format!("{prefix}{at}") };
        let at = if at.is_empty() { "document root".to_string() } else { format!("field `{at}`") };
        CliError::Malformed { file: path.display().to_string(), msg: format!("at {at}: {}", e.inner()) }
    })
}

fn read_set(path: &Path) -> Result<MatrixSet, CliError> {
    read_json(path)
}

/// `k` parsed from labels such as `lagarias-wang-experiment(k=3)`.
fn label_k(label: &str) -> Option<u32> {
    let rest = &label[label.find("k=")? + 2..];
    let digits: String = rest.chars().take_while(|c| c.is_ascii_digit()).collect();
    digits.parse().ok()
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Feasible => EXIT_OK,
        Status::Infeasible => EXIT_NONE,
        Status::Undetermined => EXIT_UNDETERMINED,
    }
}

fn quad_kind(k: KindArg) -> QuadKind {
    match k {
        KindArg::Cqlf => QuadKind::Cqlf,
        KindArg::Maxq => QuadKind::MaxOfQuadratics,
        KindArg::Minq => QuadKind::MinOfQuadratics,
    }
}

struct Ctx<'a> {
    cli: &'a Cli,
}

impl Ctx<'_> {
    fn format(&self, default: Format) -> Format {
        self.cli.format.unwrap_or(default)
    }

    fn write(&self, bytes: &[u8]) -> Result<(), CliError> {
        output::emit(self.cli.out.as_deref(), bytes)
    }

    fn write_json<T: Serialize>(&self, v: &T) -> Result<(), CliError> {
        self.write(&output::json(v)?)
    }

    fn write_csv<R: Serialize>(&self, rows: &[R]) -> Result<(), CliError> {
        self.write(&output::csv(rows)?)
    }
}

pub fn run(cli: &Cli) -> Result<u8, CliError> {
    let ctx = Ctx { cli };
    match &cli.command {
        Command::Family(FamilyCmd::Gen(a)) => family_gen(&ctx, a),
        Command::Jsr(JsrCmd::Bracket(a)) => jsr_bracket(&ctx, a),
        Command::Certify(CertifyCmd::Sos(a)) => certify_sos(&ctx, a),
        Command::Certify(CertifyCmd::Quad(a)) => certify_quad(&ctx, a),
        Command::Certify(CertifyCmd::Polytope(a)) => certify_polytope(&ctx, a),
        Command::Sweep(SweepCmd::MinDegree(a)) => sweep_min_degree(&ctx, a),
        Command::Sweep(SweepCmd::Pieces(a)) => sweep_pieces_cmd(&ctx, a),
        Command::Table(TableCmd::Sec5(a)) => table_sec5(&ctx, a),
    }
}

fn family_gen(ctx: &Ctx, a: &FamilyGen) -> Result<u8, CliError> {
    let need_k = || a.k.ok_or_else(|| CliError::Usage("--k is required for this family".into()));
    let set = match a.family {
        FamilyName::Kozyakin => {
            let branch = match a.branch {
                BranchArg::Stable => Branch::Stable,
                BranchArg::Unstable => Branch::Unstable,
            };
            kozyakin(need_k()?, branch)?
        }
        FamilyName::Blondel => {
            let alpha = a.alpha.ok_or_else(|| CliError::Usage("--alpha is required for blondel".into()))?;
            blondel_et_al(alpha)?
        }
        FamilyName::Lw => {
            let k = need_k()?;
            lagarias_wang(k, a.alpha.unwrap_or_else(|| lagarias_wang_midpoint(k)), a.scaled)?
        }
        FamilyName::LwExp => lagarias_wang_experiment(need_k()?)?,
    };
    if ctx.format(Format::Json) == Format::Csv {
        #[derive(Serialize)]
        struct Entry {
            matrix: usize,
            row: usize,
            col: usize,
            value: f64,
        }
        let n = set.dim();
        let rows: Vec<Entry> = set
            .matrices()
            .iter()
            .enumerate()
            .flat_map(|(m, a)| {
                (0..n).flat_map(move |i| (0..n).map(move |j| Entry { matrix: m, row: i, col: j, value: a.get(i, j) }))
            })
            .collect();
        ctx.write_csv(&rows)?;
    } else {
        ctx.write_json(&set)?;
    }
    Ok(EXIT_OK)
}

fn jsr_bracket(ctx: &Ctx, a: &crate::JsrBracketArgs) -> Result<u8, CliError> {
    let set = read_set(&a.input)?;
    let b = gripenberg(&set, GripenbergOptions { delta: a.delta, budget: a.budget, max_depth: a.depth })?;
    #[derive(Serialize)]
    struct Row {
        lower: f64,
        upper: f64,
        gap: f64,
        witness_word: String,
        depth: usize,
        products: u64,
        truncated: bool,
    }
    let word = b.lower_witness.word.iter().map(|i| i.to_string()).collect::<Vec<_>>().join(" ");
    match ctx.format(Format::Json) {
        Format::Json => ctx.write_json(&json!({
            "label": set.label(),
            "lower": b.lower,
            "upper": b.upper,
            "gap": b.gap(),
            "witness_word": b.lower_witness.word,
            "depth": b.depth,
            "pruned_count": b.pruned_count,
            "products": b.products,
            "truncated": b.truncated,
        }))?,
        Format::Csv => ctx.write_csv(&[Row {
            lower: b.lower,
            upper: b.upper,
            gap: b.gap(),
            witness_word: word,
            depth: b.depth,
            products: b.products,
            truncated: b.truncated,
        }])?,
    }
    if b.truncated {
        log::warn!("budget exhausted; achieved gap {:e}", b.gap());
    }
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct SummaryRow<'a> {
    search: &'a str,
    status: Status,
    margin: String,
    passed: String,
}

/// Writes a certify result and returns its exit code.
fn emit_result<V: Serialize>(
    ctx: &Ctx,
    search: &str,
    status: Status,
    margin: Option<f64>,
    body: Value,
    validation: Option<(&V, bool)>,
) -> Result<u8, CliError> {
    match ctx.format(Format::Json) {
        Format::Json => {
            let mut obj = json!({ "search": search, "status": status, "margin": margin });
            if let (Value::Object(dst), Value::Object(src)) = (&mut obj, body) {
                dst.extend(src);
            }
            if let Some((v, _)) = validation {
                obj["validation"] = serde_json::to_value(v).map_err(|e| CliError::Usage(e.to_string()))?;
            }
            ctx.write_json(&obj)?;
        }
        Format::Csv => ctx.write_csv(&[SummaryRow {
            search,
            status,
            margin: cell(margin),
            passed: validation.map(|(_, p)| p.to_string()).unwrap_or_default(),
        }])?,
    }
    Ok(status_code(status))
}

fn validation_result<V: Serialize>(ctx: &Ctx, search: &str, v: &V, passed: bool) -> Result<u8, CliError> {
    let status = if passed { Status::Feasible } else { Status::Infeasible };
    match ctx.format(Format::Json) {
        Format::Json => ctx.write_json(&json!({ "search": search, "valid": passed, "validation": v }))?,
        Format::Csv => ctx.write_csv(&[SummaryRow {
            search,
            status,
            margin: String::new(),
            passed: passed.to_string(),
        }])?,
    }
    Ok(if passed { EXIT_OK } else { EXIT_NONE })
}

fn certify_sos(ctx: &Ctx, a: &CertifySos) -> Result<u8, CliError> {
    if let Some(path) = &a.source.validate_only {
        let cert: SosLyapunovCertificate = read_certificate(path)?;
        let v = validate_sos(&cert, ctx.cli.seed)?;
        return validation_result(ctx, "sos", &v, v.passed);
    }
    let set = read_set(a.source.input.as_deref().expect("clap requires --in"))?;
    let degree = a.degree.expect("clap requires --degree");
    let out = sos_lyapunov_feasible(&set, degree, a.gamma)?;
    let search = format!("sos(d={degree})");
    match &out {
        SosOutcome::Feasible(cert) => {
            let v = validate_sos(cert, ctx.cli.seed)?;
            emit_result(ctx, &search, out.status(), out.margin(), json!({ "certificate": cert }), Some((&v, v.passed)))
        }
        SosOutcome::Infeasible { .. } => emit_result::<()>(ctx, &search, out.status(), out.margin(), json!({}), None),
        SosOutcome::Undetermined { reason, .. } => {
            emit_result::<()>(ctx, &search, out.status(), out.margin(), json!({ "reason": reason }), None)
        }
    }
}

fn certify_quad(ctx: &Ctx, a: &CertifyQuad) -> Result<u8, CliError> {
    if let Some(path) = &a.source.validate_only {
        let cert: PiecewiseQuadraticCertificate = read_certificate(path)?;
        let v = validate_quadratic(&cert, ctx.cli.seed)?;
        return validation_result(ctx, cert.kind.name(), &v, v.passed);
    }
    let set = read_set(a.source.input.as_deref().expect("clap requires --in"))?;
    let kind = quad_kind(a.kind.expect("clap requires --kind"));
    let out = match kind {
        QuadKind::Cqlf => cqlf(&set, a.gamma)?,
        QuadKind::MaxOfQuadratics => max_of_quadratics(&set, a.order, a.gamma)?,
        QuadKind::MinOfQuadratics => min_of_quadratics(&set, a.order, a.gamma)?,
    };
    let search = match kind {
        QuadKind::Cqlf => "cqlf".to_string(),
        k => format!("{}(l={})", k.name(), a.order),
    };
    match &out {
        QuadOutcome::Certificate(cert) => {
            let v = validate_quadratic(cert, ctx.cli.seed)?;
            emit_result(ctx, &search, out.status(), out.margin(), json!({ "certificate": cert }), Some((&v, v.passed)))
        }
        QuadOutcome::None { .. } => emit_result::<()>(ctx, &search, out.status(), out.margin(), json!({}), None),
        QuadOutcome::Undetermined { reason, .. } => {
            emit_result::<()>(ctx, &search, out.status(), out.margin(), json!({ "reason": reason }), None)
        }
    }
}

fn certify_polytope(ctx: &Ctx, a: &CertifyPolytope) -> Result<u8, CliError> {
    if let Some(path) = &a.source.validate_only {
        let cert: PolytopeCertificate = read_certificate(path)?;
        let v = validate_polytope(&cert, ctx.cli.seed)?;
        return validation_result(ctx, "polytope", &v, v.passed);
    }
    let set = read_set(a.source.input.as_deref().expect("clap requires --in"))?;
    let init = match a.init {
        InitArg::Eig => InitMode::Eig,
        InitArg::Square => InitMode::Square,
    };
    let out = invariant_polytope_iterate(&set, a.gamma, a.max_vertices, init)?;
    match &out {
        PolytopeOutcome::Certificate(cert) => {
            let v = validate_polytope(cert, ctx.cli.seed)?;
            emit_result(
                ctx,
                "polytope",
                Status::Feasible,
                None,
                json!({ "vertex_count": cert.vertex_count(), "certificate": cert }),
                Some((&v, v.passed)),
            )
        }
        PolytopeOutcome::VertexLimit { vertex_counts } => emit_result::<()>(
            ctx,
            "polytope",
            Status::Infeasible,
            None,
            json!({
                "vertex_counts": vertex_counts,
                "reason": "vertex limit exceeded; the iteration is one constructive search, so this is evidence rather than proof of non-existence",
            }),
            None,
        ),
        PolytopeOutcome::Unverified { vertex_counts, reason } => emit_result::<()>(
            ctx,
            "polytope",
            Status::Undetermined,
            None,
            json!({ "vertex_counts": vertex_counts, "reason": reason }),
            None,
        ),
    }
}

#[derive(Serialize)]
struct MinDegreeRow {
    label: String,
    k: Option<u32>,
    min_degree: Option<u32>,
    status_per_degree: String,
}

fn sweep_exit(found: bool, any_undetermined: bool) -> u8 {
    if found {
        EXIT_OK
    } else if any_undetermined {
        EXIT_UNDETERMINED
    } else {
        EXIT_NONE
    }
}

fn sweep_min_degree(ctx: &Ctx, a: &SweepMinDegree) -> Result<u8, CliError> {
    let set = read_set(&a.input)?;
    let report = min_sos_degree(&set, a.dmax)?;
    match ctx.format(Format::Csv) {
        Format::Csv => ctx.write_csv(&[MinDegreeRow {
            label: set.label().to_string(),
            k: label_k(set.label()),
            min_degree: report.min_degree,
            status_per_degree: report.status_string(),
        }])?,
        Format::Json => ctx.write_json(&json!({
            "label": set.label(),
            "min_degree": report.min_degree,
            "per_degree": report.per_degree,
        }))?,
    }
    let undetermined = report.per_degree.iter().any(|s| s.status == Status::Undetermined);
    Ok(sweep_exit(report.min_degree.is_some(), undetermined))
}

fn sweep_pieces_cmd(ctx: &Ctx, a: &SweepPieces) -> Result<u8, CliError> {
    let set = read_set(&a.input)?;
    let report = sweep_pieces(&set, quad_kind(a.kind), a.lmax, a.gamma)?;
    #[derive(Serialize)]
    struct Row<'a> {
        label: &'a str,
        kind: &'a str,
        order: usize,
        pieces: usize,
        status: Status,
        margin: String,
    }
    match ctx.format(Format::Csv) {
        Format::Csv => {
            let rows: Vec<Row> = report
                .per_order
                .iter()
                .map(|o| Row {
                    label: set.label(),
                    kind: report.kind.name(),
                    order: o.order,
                    pieces: o.pieces,
                    status: o.status,
                    margin: cell(o.margin),
                })
                .collect();
            ctx.write_csv(&rows)?
        }
        Format::Json => ctx.write_json(&json!({ "label": set.label(), "report": report }))?,
    }
    let undetermined = report.per_order.iter().any(|o| o.status == Status::Undetermined);
    Ok(sweep_exit(report.min_order.is_some(), undetermined))
}

#[derive(Serialize)]
struct Sec5Row {
    k: u32,
    alpha: f64,
    scale: f64,
    min_degree: Option<u32>,
    status_per_degree: String,
}

fn table_sec5(ctx: &Ctx, a: &TableSec5) -> Result<u8, CliError> {
    if a.kmax < 2 {
        return Err(CliError::Usage("--kmax must be at least 2".into()));
    }
    let rows: Vec<(Sec5Row, bool)> = (2..=a.kmax)
        .into_par_iter()
        .map(|k| -> Result<(Sec5Row, bool), CliError> {
            let (alpha, scale) = lagarias_wang_experiment_params(k)?;
            let report = min_sos_degree(&lagarias_wang_experiment(k)?, a.dmax)?;
            let undetermined = report.per_degree.iter().any(|s| s.status == Status::Undetermined);
            let row = Sec5Row {
                k,
                alpha,
                scale,
                min_degree: report.min_degree,
                status_per_degree: report.status_string(),
            };
            Ok((row, undetermined))
        })
        .collect::<Result<_, _>>()?;
    let code = rows.iter().map(|(r, u)| sweep_exit(r.min_degree.is_some(), *u)).max().unwrap_or(EXIT_OK);
    let rows: Vec<Sec5Row> = rows.into_iter().map(|(r, _)| r).collect();
    match ctx.format(Format::Csv) {
        Format::Csv => ctx.write_csv(&rows)?,
        Format::Json => ctx.write_json(&rows)?,
    }
    Ok(code)
}
