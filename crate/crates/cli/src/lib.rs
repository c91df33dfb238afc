//! Command-line front end: point-set generation, exact discrepancies, duality
//! certificates, coincidence graphs and the constants report.
//!
//! Every run prints one JSON document (or CSV table) on stdout. Exit codes: `0`
//! on success, `2` for usage errors, `3` when a work budget is exceeded and `4`
//! for any other error.

use std::ffi::OsString;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::ToPrimitive;
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use discrepancy_core::constants::{self, ConstantsError};
use discrepancy_core::dyadic::{DyadicBox, DyadicError, DyadicInterval, Sign, SignedHaarAtom};
use discrepancy_core::graphs::{self, GraphError, TwoColoredGraph};
use discrepancy_core::gridfn::{GridError, DEFAULT_MAX_CELLS};
use discrepancy_core::pointset::{self, PointKind, PointSet, PointSetError};
use discrepancy_core::riesz::{self, RieszError, SignRule};

/// Version written into every JSON document and results row.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Environment variable capping the worker-thread count.
pub const THREADS_ENV: &str = "DISCREPANCY_LAB_THREADS";

#[derive(Parser, Debug, Serialize)]
#[command(name = "discrepancy-lab", version, about = "Exact star-discrepancy lower bounds via dyadic Haar analysis")]
pub struct Cli {
    /// Output format.
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Seed for random point sets and random sign rules.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Cap on the number of grid cells for exact grid computations.
    #[arg(long, global = true)]
    pub budget_cells: Option<u64>,
    /// Append certificate and norm-ratio rows to this CSV file.
    #[arg(long, global = true)]
    pub results: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Kind {
    Vdc,
    Hammersley,
    Random,
    Grid,
}

impl Kind {
    fn to_core(self) -> PointKind {
        match self {
            Kind::Vdc => PointKind::VanDerCorput,
            Kind::Hammersley => PointKind::Hammersley,
            Kind::Random => PointKind::Random,
            Kind::Grid => PointKind::Grid,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleArg {
    /// Every sign `+1`.
    Plus,
    /// Sign of the Haar coefficient of the discrepancy function.
    Coef,
    /// Seeded random signs (uses `--seed`, default 0).
    Random,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Generate a point set.
    Gen {
        #[arg(long, value_enum)]
        kind: Kind,
        #[arg(long)]
        n: usize,
        #[arg(long, short)]
        d: usize,
        /// Write the points in text form to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exact discrepancies of a point set.
    Disc {
        #[command(subcommand)]
        mode: DiscMode,
    },
    /// Cumulative `Σ ⟨D_N,h_R⟩^2 / |R|` by maximal level.
    HaarSpectrum {
        #[arg(long)]
        points: PathBuf,
        #[arg(long, default_value_t = 4)]
        max_level: u32,
    },
    /// Duality lower bounds for the star discrepancy.
    Certify {
        #[command(subcommand)]
        test_function: CertifyCmd,
    },
    /// Two-colored coincidence graphs.
    Graphs {
        #[command(subcommand)]
        action: GraphsCmd,
    },
    /// Exhaustive composition search for the product inequality.
    Lemma5 {
        #[arg(long)]
        v: Option<u32>,
        #[arg(long)]
        l: Option<u32>,
        #[arg(long)]
        k: Option<u32>,
        /// Sweep all `(v, l, k)` with `v <= vmax` instead.
        #[arg(long)]
        vmax: Option<u32>,
    },
    /// Closed-form constants and recorded ratios.
    Constants,
    /// Numeric evaluation of the two tree sums against their bounds.
    Sumchain {
        #[arg(long, default_value_t = 4)]
        vmin: u32,
        #[arg(long, default_value_t = 20)]
        vmax: u32,
        #[arg(long)]
        n: f64,
        #[arg(long)]
        q: f64,
        /// Split parameter; defaults to `(√41 - 5)/4`.
        #[arg(long)]
        alpha: Option<f64>,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscMode {
    /// Exact star discrepancy.
    Exact {
        #[arg(long)]
        points: PathBuf,
    },
    /// Exact L2 discrepancy.
    L2 {
        #[arg(long)]
        points: PathBuf,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertifyCmd {
    /// Planar Riesz product with signs of the Haar coefficients.
    Halasz2d {
        #[arg(long)]
        points: PathBuf,
        /// `γ` as a rational, e.g. `1/2`.
        #[arg(long, default_value = "1/2")]
        gamma: String,
    },
    /// Strongly distinct part of the three-dimensional product.
    Riesz3d {
        #[arg(long)]
        points: PathBuf,
        #[arg(long)]
        n: u32,
        /// Integer `q`; use either this or `--eps`.
        #[arg(long)]
        q: Option<u32>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.2)]
        b: f64,
        #[arg(long, value_enum, default_value_t = RuleArg::Coef)]
        sign_rule: RuleArg,
    },
    /// A single Haar function, `--box "k1:a1,k2:a2"`.
    Atom {
        #[arg(long)]
        points: PathBuf,
        #[arg(long = "box")]
        bx: String,
        #[arg(long)]
        negative: bool,
    },
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphsCmd {
    /// All admissible graphs on `{1, ..., vertices}`.
    Enum {
        #[arg(long)]
        vertices: usize,
    },
    /// Tree/cycle class of a graph file.
    Classify {
        #[arg(long)]
        graph: PathBuf,
    },
    /// Materialize the coincidence product of a graph.
    Prodx {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        q: u32,
        #[arg(long, value_enum, default_value_t = RuleArg::Random)]
        sign_rule: RuleArg,
    },
    /// Measured norm against the cycle-gain bound.
    Beckgain {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long)]
        n: u32,
        #[arg(long)]
        q: u32,
        #[arg(long, default_value_t = 1)]
        l: u32,
        #[arg(long, default_value_t = 1.0)]
        a: f64,
        #[arg(long, default_value_t = 0.2)]
        b: f64,
        #[arg(long, value_enum, default_value_t = RuleArg::Random)]
        sign_rule: RuleArg,
    },
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Budget(String),
    Domain(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Budget(_) => 3,
            CliError::Domain(_) => 4,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Usage(m) | CliError::Budget(m) | CliError::Domain(m) => m,
        }
    }
}

fn budget_or_domain(is_budget: bool, msg: String) -> CliError {
    if is_budget {
        CliError::Budget(msg)
    } else {
        CliError::Domain(msg)
    }
}

impl From<PointSetError> for CliError {
    fn from(e: PointSetError) -> Self {
        budget_or_domain(matches!(e, PointSetError::BudgetExceeded { .. }), e.to_string())
    }
}

impl From<GridError> for CliError {
    fn from(e: GridError) -> Self {
        budget_or_domain(matches!(e, GridError::BudgetExceeded { .. }), e.to_string())
    }
}

impl From<DyadicError> for CliError {
    fn from(e: DyadicError) -> Self {
        CliError::Domain(e.to_string())
    }
}

impl From<RieszError> for CliError {
    fn from(e: RieszError) -> Self {
        match e {
            RieszError::Grid(g) => g.into(),
            RieszError::PointSet(p) => p.into(),
            RieszError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<GraphError> for CliError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::Riesz(r) => r.into(),
            GraphError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            other => CliError::Domain(other.to_string()),
        }
    }
}

impl From<ConstantsError> for CliError {
    fn from(e: ConstantsError) -> Self {
        budget_or_domain(matches!(e, ConstantsError::BudgetExceeded { .. }), e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Domain(format!("{}: {e}", path.display()))
}

/// A command's result: the JSON document and, for tabular results, its rows.
struct Output {
    doc: Value,
    table: Option<Vec<Value>>,
}

/// One row of the results file.
#[derive(Default, Serialize)]
struct ResultRow {
    version: String,
    kind: String,
    point_set: String,
    descriptor: String,
    n: Option<u32>,
    q: Option<u32>,
    a: Option<f64>,
    b: Option<f64>,
    epsilon: Option<f64>,
    norm_psi_1: Option<f64>,
    norm_psi_not_1: Option<f64>,
    inner_sd: Option<f64>,
    certificate: Option<f64>,
    exact_star: Option<f64>,
    graph_id: Option<String>,
    class: Option<String>,
    t: Option<usize>,
    measured: Option<f64>,
    bound: Option<f64>,
    ratio: Option<f64>,
}

fn append_results(path: &Path, rows: &[ResultRow]) -> Result<(), CliError> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new()
        .create(true)
        .append(true)
        .open(path)
        .map_err(|e| io_err(path, e))?;
    let mut w = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
    for r in rows {
        w.serialize(r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

fn read_points(path: &Path) -> Result<PointSet, CliError> {
    Ok(pointset::read_points(path)?)
}

fn rational_json(r: &num_rational::BigRational) -> Value {
    json!({ "value": r.to_f64(), "exact": r.to_string() })
}

fn sign_rule<'a>(arg: RuleArg, seed: Option<u64>, p: Option<&'a PointSet>) -> Result<SignRule<'a>, CliError> {
    Ok(match arg {
        RuleArg::Plus => SignRule::AllPlus,
        RuleArg::Random => SignRule::SeededRandom(seed.unwrap_or(0)),
        RuleArg::Coef => SignRule::SignOfHaarCoefficient(
            p.ok_or_else(|| CliError::Usage("sign rule 'coef' needs a point set".into()))?,
        ),
    })
}

fn parse_rational(s: &str) -> Result<num_rational::BigRational, CliError> {
    s.trim()
        .parse::<num_rational::BigRational>()
        .map_err(|e| CliError::Usage(format!("'{s}' is not a rational: {e}")))
}

/// `"k1:a1,k2:a2"` → dyadic box.
fn parse_box(s: &str) -> Result<DyadicBox, CliError> {
    let mut ivs = Vec::new();
    for part in s.split(',') {
        let (k, a) = part
            .split_once(':')
            .ok_or_else(|| CliError::Usage(format!("box component '{part}' is not 'level:offset'")))?;
        let k: u32 = k.trim().parse().map_err(|_| CliError::Usage(format!("bad level '{k}'")))?;
        let a: i64 = a.trim().parse().map_err(|_| CliError::Usage(format!("bad offset '{a}'")))?;
        ivs.push(DyadicInterval::new(k, a)?);
    }
    Ok(DyadicBox::new(&ivs)?)
}

#[derive(Serialize, Deserialize)]
struct EdgeJson {
    u: u32,
    v: u32,
    color: u8,
}

#[derive(Serialize, Deserialize)]
struct GraphJson {
    vertices: Vec<u32>,
    edges: Vec<EdgeJson>,
}

/// Graph interchange: `{"vertices": [...], "edges": [{"u", "v", "color"}]}`.
pub fn graph_to_json(g: &TwoColoredGraph) -> Value {
    serde_json::to_value(GraphJson {
        vertices: g.vertices().to_vec(),
        edges: g
            .edge_list()
            .into_iter()
            .map(|(u, v, color)| EdgeJson { u, v, color })
            .collect(),
    })
    .expect("graph serializes")
}

pub fn graph_from_json(text: &str) -> Result<TwoColoredGraph, CliError> {
    let g: GraphJson = serde_json::from_str(text).map_err(|e| CliError::Domain(format!("graph file: {e}")))?;
    let edges: Vec<(u32, u32, u8)> = g.edges.iter().map(|e| (e.u, e.v, e.color)).collect();
    Ok(TwoColoredGraph::new(&g.vertices, &edges)?)
}

fn read_graph(path: &Path) -> Result<TwoColoredGraph, CliError> {
    graph_from_json(&fs::read_to_string(path).map_err(|e| io_err(path, e))?)
}

fn certificate_json(c: &riesz::Certificate) -> Value {
    json!({
        "lower_bound": c.lower_bound,
        "inner_product": c.inner_product,
        "inner_product_exact": c.inner_product_exact.as_ref().map(|r| r.to_string()),
        "l1_norm": c.l1_norm.value,
        "l1_norm_mode": c.l1_norm.mode.as_str(),
        "descriptor": c.descriptor,
        "point_set": c.point_set,
    })
}

fn exact_star(p: &PointSet) -> Option<f64> {
    pointset::star_discrepancy_exact(p).ok().map(|r| r.value)
}

fn cmd_gen(kind: Kind, n: usize, d: usize, out: Option<&Path>, seed: Option<u64>) -> Result<Output, CliError> {
    let p = pointset::generate(kind.to_core(), n, d, seed)?;
    let text = pointset::format_points(&p);
    if let Some(path) = out {
        fs::write(path, &text).map_err(|e| io_err(path, e))?;
    }
    let rows: Vec<Value> = p.points().map(|q| json!(q)).collect();
    Ok(Output {
        doc: json!({ "label": p.label(), "n": n, "d": d, "points": rows }),
        table: Some(
            p.points()
                .map(|q| {
                    let mut m = Map::new();
                    for (t, v) in q.iter().enumerate() {
                        m.insert(format!("x{}", t + 1), json!(v));
                    }
                    Value::Object(m)
                })
                .collect(),
        ),
    })
}

fn cmd_disc(mode: &DiscMode) -> Result<Output, CliError> {
    match mode {
        DiscMode::Exact { points } => {
            let p = read_points(points)?;
            let r = pointset::star_discrepancy_exact(&p)?;
            Ok(Output {
                doc: json!({
                    "value": r.value,
                    "exact": r.exact.to_string(),
                    "witness": r.witness,
                    "semantics": r.semantics.as_str(),
                    "n": p.len(),
                    "d": p.dim(),
                    "point_set": p.label(),
                }),
                table: None,
            })
        }
        DiscMode::L2 { points } => {
            let p = read_points(points)?;
            let r = pointset::l2_discrepancy_exact(&p);
            Ok(Output {
                doc: json!({
                    "value": r.value,
                    "squared": r.squared.to_string(),
                    "n": p.len(),
                    "d": p.dim(),
                    "point_set": p.label(),
                }),
                table: None,
            })
        }
    }
}

fn cmd_spectrum(points: &Path, max_level: u32) -> Result<Output, CliError> {
    let p = read_points(points)?;
    let rows = pointset::haar_spectrum(&p, max_level)?;
    let l2sq = pointset::l2_discrepancy_exact(&p).squared;
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "max_level": r.max_level,
                "bessel_sum": r.bessel_sum.to_f64(),
                "bessel_sum_exact": r.bessel_sum.to_string(),
            })
        })
        .collect();
    Ok(Output {
        doc: json!({ "point_set": p.label(), "l2_squared": l2sq.to_f64(), "rows": table }),
        table: Some(table),
    })
}

fn cmd_certify(cmd: &CertifyCmd, cli: &Cli) -> Result<(Output, Vec<ResultRow>), CliError> {
    let max_cells = cli.budget_cells.unwrap_or(DEFAULT_MAX_CELLS);
    match cmd {
        CertifyCmd::Halasz2d { points, gamma } => {
            let p = read_points(points)?;
            let g = parse_rational(gamma)?;
            let phi = riesz::build_halasz(&p, &g)?;
            let grid = phi.grid()?;
            if grid.cells() as u64 > max_cells {
                return Err(CliError::Budget(format!("grid of {} cells exceeds the budget {max_cells}", grid.cells())));
            }
            let c = riesz::certify_halasz(&p, &phi)?;
            let linear = phi.linear_pairing(&p)?;
            let star = exact_star(&p);
            let mut doc = certificate_json(&c);
            doc["n"] = json!(phi.n());
            doc["gamma"] = json!(g.to_string());
            doc["linear_pairing"] = rational_json(&linear);
            doc["exact_star"] = json!(star);
            let row = ResultRow {
                kind: "halasz2d".into(),
                point_set: p.label().into(),
                descriptor: c.descriptor.clone(),
                n: Some(phi.n()),
                certificate: Some(c.lower_bound),
                exact_star: star,
                ..Default::default()
            };
            Ok((Output { doc, table: None }, vec![row]))
        }
        CertifyCmd::Riesz3d {
            points,
            n,
            q,
            eps,
            a,
            b,
            sign_rule: rule,
        } => {
            let p = read_points(points)?;
            let cfg = match (q, eps) {
                (Some(q), None) => riesz::PsiConfig::with_q(*n, *q, *a, *b)?,
                (None, Some(e)) => riesz::PsiConfig::from_epsilon(*n, *e, *a, *b)?,
                _ => return Err(CliError::Usage("give exactly one of --q and --eps".into())),
            };
            let rule = sign_rule(*rule, cli.seed, Some(&p))?;
            let psi = riesz::build_psi(&rule, cfg)?;
            let scan = psi.grid_scan(max_cells)?;
            let c = riesz::certify_psi_sd(&p, &psi, &scan)?;
            let star = exact_star(&p);
            let mut doc = certificate_json(&c);
            doc["n"] = json!(cfg.n);
            doc["q"] = json!(cfg.q);
            doc["a"] = json!(cfg.a);
            doc["b"] = json!(cfg.b);
            doc["epsilon"] = json!(cfg.epsilon);
            doc["rho_tilde"] = json!(cfg.rho_tilde());
            doc["norm_psi_1"] = json!(scan.l1_psi);
            doc["norm_psi_sd_1"] = json!(scan.l1_psi_sd);
            doc["norm_psi_not_1"] = json!(scan.l1_psi_not);
            doc["identity_mismatches"] = json!(scan.identity_mismatches);
            doc["sign_rule"] = json!(rule.tag().to_string());
            doc["exact_star"] = json!(star);
            let row = ResultRow {
                kind: "riesz3d".into(),
                point_set: p.label().into(),
                descriptor: c.descriptor.clone(),
                n: Some(cfg.n),
                q: Some(cfg.q),
                a: Some(cfg.a),
                b: Some(cfg.b),
                epsilon: Some(cfg.epsilon),
                norm_psi_1: Some(scan.l1_psi),
                norm_psi_not_1: Some(scan.l1_psi_not),
                inner_sd: Some(c.inner_product),
                certificate: Some(c.lower_bound),
                exact_star: star,
                ..Default::default()
            };
            Ok((Output { doc, table: None }, vec![row]))
        }
        CertifyCmd::Atom { points, bx, negative } => {
            let p = read_points(points)?;
            let bx = parse_box(bx)?;
            let atom = SignedHaarAtom::new(bx, if *negative { Sign::Minus } else { Sign::Plus });
            let c = riesz::certify_atom(&p, &atom)?;
            let star = exact_star(&p);
            let mut doc = certificate_json(&c);
            doc["exact_star"] = json!(star);
            let row = ResultRow {
                kind: "atom".into(),
                point_set: p.label().into(),
                descriptor: c.descriptor.clone(),
                certificate: Some(c.lower_bound),
                exact_star: star,
                ..Default::default()
            };
            Ok((Output { doc, table: None }, vec![row]))
        }
    }
}

fn cmd_graphs(cmd: &GraphsCmd, cli: &Cli) -> Result<(Output, Vec<ResultRow>), CliError> {
    let max_cells = cli.budget_cells.unwrap_or(DEFAULT_MAX_CELLS);
    match cmd {
        GraphsCmd::Enum { vertices } => {
            let vs: Vec<u32> = (1..=*vertices as u32).collect();
            let all = graphs::enumerate_admissible(&vs)?;
            let mut list = Vec::new();
            let mut table = Vec::new();
            for a in &all {
                let connected = a.graph.is_connected();
                let class = if connected { Some(graphs::classify(&a.graph)?) } else { None };
                let mut g = graph_to_json(&a.graph);
                g["id"] = json!(a.graph.id());
                g["cliques"] = json!({ "color2": a.cliques.color2, "color3": a.cliques.color3 });
                g["connected"] = json!(connected);
                g["class"] = json!(class.as_ref().map(|c| c.tag.as_str()));
                g["t"] = json!(class.as_ref().map(|c| c.t));
                list.push(g);
                table.push(json!({
                    "graph_id": a.graph.id(),
                    "edges": a.graph.edge_count(),
                    "connected": connected,
                    "class": class.as_ref().map(|c| c.tag.as_str()),
                    "t": class.as_ref().map(|c| c.t),
                }));
            }
            Ok((
                Output {
                    doc: json!({ "vertices": vs, "count": all.len(), "graphs": list }),
                    table: Some(table),
                },
                vec![],
            ))
        }
        GraphsCmd::Classify { graph } => {
            let g = read_graph(graph)?;
            let c = graphs::classify(&g)?;
            let adm = graphs::check_admissible(&g);
            Ok((
                Output {
                    doc: json!({
                        "graph_id": g.id(),
                        "class": c.tag.as_str(),
                        "t": c.t,
                        "bicolored_cycles": c.cycles,
                        "admissible": adm.is_admissible(),
                    }),
                    table: None,
                },
                vec![],
            ))
        }
        GraphsCmd::Prodx { graph, n, q, sign_rule: rule } => {
            let g = read_graph(graph)?;
            let rule = sign_rule(*rule, cli.seed, None)?;
            let x = graphs::coincidence_set(&g, *n, *q)?;
            let f = graphs::prod_x(&x, &rule, max_cells)?;
            let l1 = f.lp_norm(discrepancy_core::Lp::Finite(1.0))?;
            let l2 = f.lp_norm(discrepancy_core::Lp::Finite(2.0))?;
            let linf = f.lp_norm(discrepancy_core::Lp::Infinity)?;
            Ok((
                Output {
                    doc: json!({
                        "graph_id": g.id(),
                        "n": n,
                        "q": q,
                        "tuples": x.len(),
                        "grid": f.grid().res(),
                        "integral": rational_json(&f.integral()),
                        "l1_norm": l1.value,
                        "l2_norm": l2.value,
                        "sup_norm": linf.value,
                        "sign_rule": rule.tag().to_string(),
                    }),
                    table: None,
                },
                vec![],
            ))
        }
        GraphsCmd::Beckgain {
            graph,
            n,
            q,
            l,
            a,
            b,
            sign_rule: rule,
        } => {
            let g = read_graph(graph)?;
            let rule = sign_rule(*rule, cli.seed, None)?;
            let r = graphs::verify_beckgain(&g, *n, *q, *l, *a, *b, &rule, max_cells)?;
            let doc = json!({
                "graph_id": r.graph_id,
                "class": r.class.as_str(),
                "t": r.t,
                "n": r.n,
                "q": r.q,
                "l": r.l,
                "a": a,
                "b": b,
                "tuples": r.tuples,
                "measured": r.measured,
                "bound": r.bound,
                "ratio": r.ratio,
                "sign_rule": rule.tag().to_string(),
            });
            let row = ResultRow {
                kind: "beckgain".into(),
                descriptor: rule.tag().to_string(),
                n: Some(r.n),
                q: Some(r.q),
                a: Some(*a),
                b: Some(*b),
                graph_id: Some(r.graph_id.clone()),
                class: Some(r.class.as_str().into()),
                t: Some(r.t),
                measured: Some(r.measured),
                bound: Some(r.bound),
                ratio: Some(r.ratio),
                ..Default::default()
            };
            Ok((Output { doc, table: None }, vec![row]))
        }
    }
}

fn lemma5_row(r: &constants::Lemma5Result) -> Value {
    json!({
        "v": r.v,
        "l": r.l,
        "k": r.k,
        "compositions": r.compositions,
        "max_ratio": r.max_ratio,
        "max_ratio_exact": r.max_ratio_exact.to_string(),
        "argmax": r.argmax.iter().map(u32::to_string).collect::<Vec<_>>().join(" "),
        "min_objective": r.min_objective,
        "stationary_objective": r.stationary.as_ref().map(|s| s.objective),
        "stationary_lambda": r.stationary.as_ref().map(|s| s.lambda),
    })
}

fn cmd_lemma5(v: Option<u32>, l: Option<u32>, k: Option<u32>, vmax: Option<u32>) -> Result<Output, CliError> {
    match (v, l, k, vmax) {
        (Some(v), Some(l), Some(k), None) => {
            let r = constants::lemma5_verify(v, l, k)?;
            Ok(Output {
                doc: lemma5_row(&r),
                table: None,
            })
        }
        (None, None, None, Some(vmax)) => {
            if vmax > constants::MAX_COMPOSITION_V {
                return Err(ConstantsError::BudgetExceeded {
                    what: "v",
                    value: vmax as u64,
                    budget: constants::MAX_COMPOSITION_V as u64,
                }
                .into());
            }
            let rows = constants::lemma5_sweep(vmax)?;
            let best = rows
                .iter()
                .max_by(|a, b| a.max_ratio_exact.cmp(&b.max_ratio_exact))
                .expect("vmax >= 2 gives at least one case");
            let table: Vec<Value> = rows.iter().map(lemma5_row).collect();
            Ok(Output {
                doc: json!({ "vmax": vmax, "max_ratio": best.max_ratio, "argmax_case": lemma5_row(best), "rows": table }),
                table: Some(table),
            })
        }
        _ => Err(CliError::Usage("give --v, --l and --k, or --vmax alone".into())),
    }
}

/// The closed-form constants and the recorded constants of the test suite.
pub fn constants_report() -> Result<Value, CliError> {
    let eta = constants::eta_bound();
    let opt = constants::optimize();
    let (grid_alpha, grid_eps) = constants::epsilon_tau_grid_max(1e-6)?;
    Ok(json!({
        "eta": eta.eta_closed,
        "eta_from_epsilon": eta.eta_from_epsilon,
        "eta_identity_residual": eta.residual,
        "eta_identity_holds": eta.equal,
        "alpha_opt": opt.alpha_opt,
        "epsilon_max": opt.epsilon_max,
        "epsilon_max_closed_form": constants::epsilon_max(),
        "eta_max": opt.eta_max,
        "active_terms": opt.active_terms,
        "grid_search": { "step": 1e-6, "alpha": grid_alpha, "epsilon": grid_eps, "alpha_error": (grid_alpha - opt.alpha_opt).abs() },
        "recorded": {
            "lemma5_constant": constants::lemma5_constant().to_string(),
            "lemma5_constant_value": constants::lemma5_constant().to_f64(),
            "stirling_constant": constants::STIRLING_CONSTANT,
            "admissible_count_constant": graphs::ADMISSIBLE_COUNT_CONSTANT,
            "kappa": constants::KAPPA,
            "w_z0_threshold": constants::W_Z0_THRESHOLD,
        },
    }))
}

fn cmd_sumchain(vmin: u32, vmax: u32, n: f64, q: f64, alpha: Option<f64>) -> Result<Output, CliError> {
    let alpha = alpha.unwrap_or_else(constants::alpha_opt);
    if vmin > vmax {
        return Err(CliError::Usage("--vmin must not exceed --vmax".into()));
    }
    let rows = constants::sum_chain_report(vmin..=vmax, n, q, alpha)?;
    let table: Vec<Value> = rows
        .iter()
        .map(|r| {
            json!({
                "v": r.v,
                "split": r.split,
                "ln_sigma1": finite(r.ln_sigma1),
                "ln_sigma1_bound": r.ln_sigma1_bound,
                "ratio1": r.ratio1,
                "ln_sigma2": finite(r.ln_sigma2),
                "ln_sigma2_bound": r.ln_sigma2_bound,
                "ratio2": r.ratio2,
                "geometric_step": constants::geometric_step_holds(r.v, n, alpha),
            })
        })
        .collect();
    Ok(Output {
        doc: json!({ "n": n, "q": q, "alpha": alpha, "rows": table }),
        table: Some(table),
    })
}

/// JSON has no infinities; empty sums are reported as `null`.
fn finite(x: f64) -> Option<f64> {
    x.is_finite().then_some(x)
}

fn dispatch(cli: &Cli) -> Result<(Output, Vec<ResultRow>), CliError> {
    Ok(match &cli.command {
        Command::Gen { kind, n, d, out } => (cmd_gen(*kind, *n, *d, out.as_deref(), cli.seed)?, vec![]),
        Command::Disc { mode } => (cmd_disc(mode)?, vec![]),
        Command::HaarSpectrum { points, max_level } => (cmd_spectrum(points, *max_level)?, vec![]),
        Command::Certify { test_function } => cmd_certify(test_function, cli)?,
        Command::Graphs { action } => cmd_graphs(action, cli)?,
        Command::Lemma5 { v, l, k, vmax } => (cmd_lemma5(*v, *l, *k, *vmax)?, vec![]),
        Command::Constants => (
            Output {
                doc: constants_report()?,
                table: None,
            },
            vec![],
        ),
        Command::Sumchain { vmin, vmax, n, q, alpha } => (cmd_sumchain(*vmin, *vmax, *n, *q, *alpha)?, vec![]),
    })
}

fn scalar_string(v: &Value) -> String {
    match v {
        Value::Null => String::new(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn write_csv(out: &mut dyn Write, rows: &[Value]) -> Result<(), CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let header: Vec<String> = match rows.first() {
        Some(Value::Object(m)) => m.keys().cloned().collect(),
        _ => vec![],
    };
    if !header.is_empty() {
        w.write_record(&header).map_err(|e| CliError::Domain(e.to_string()))?;
    }
    for r in rows {
        let rec: Vec<String> = header.iter().map(|h| scalar_string(&r[h])).collect();
        w.write_record(&rec).map_err(|e| CliError::Domain(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Domain(e.to_string()))?;
    out.write_all(&bytes).map_err(|e| CliError::Domain(e.to_string()))
}

/// Flatten the top-level scalars of a document into one CSV row.
fn flat_row(doc: &Value) -> Value {
    let mut m = Map::new();
    if let Value::Object(obj) = doc {
        for (k, v) in obj {
            if !v.is_object() && !v.is_array() {
                m.insert(k.clone(), v.clone());
            }
        }
    }
    Value::Object(m)
}

fn configure_threads() {
    if let Some(n) = std::env::var(THREADS_ENV).ok().and_then(|s| s.trim().parse::<usize>().ok()) {
        if n > 0 {
            // Fails only if the global pool already exists, which is harmless.
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

/// Parse `args` (including the program name), run the command and write the
/// result to `out`. Returns the process exit code.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    configure_threads();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            if e.use_stderr() {
                eprint!("{e}");
            } else {
                let _ = write!(out, "{e}");
            }
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<(), CliError> {
    let (output, results) = dispatch(cli)?;
    if let Some(path) = &cli.results {
        let rows: Vec<ResultRow> = results
            .into_iter()
            .map(|mut r| {
                r.version = VERSION.to_string();
                r
            })
            .collect();
        if !rows.is_empty() {
            append_results(path, &rows)?;
        }
    }
    match cli.format {
        Format::Json => {
            let mut doc = output.doc;
            if let Value::Object(m) = &mut doc {
                m.insert("version".into(), json!(VERSION));
                m.insert("config".into(), serde_json::to_value(cli).expect("config serializes"));
            }
            let text = serde_json::to_string_pretty(&doc).map_err(|e| CliError::Domain(e.to_string()))?;
            writeln!(out, "{text}").map_err(|e| CliError::Domain(e.to_string()))
        }
        Format::Csv => {
            let rows = output.table.unwrap_or_else(|| vec![flat_row(&output.doc)]);
            write_csv(out, &rows)
        }
    }
}
