use std::path::PathBuf;
use std::process::ExitCode;

use bs1d::arith::{self, parse_rational};
use bs1d::flow::{self, GeneralizedGeodesic, HorizontalFlowPoint};
use bs1d::fold;
use bs1d::group::GammaElement;
use bs1d::nerve::{self, CoverFixture};
use bs1d::quotient::{self, Enumeration, FiniteSemidirect};
use bs1d::tree::{self, TreePoint, TreeVertex};
use bs1d::verify;
use bs1d::warped::{self, SpacePoint};
use bs1d::Error;
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Map, Value};

const SCHEMA_VERSION: u64 = 1;
const DEFAULTS: &str = include_str!("../../../config/defaults.json");

#[derive(Parser, Debug)]
#[command(name = "bs1d", version, about = "Reproducible computations on BS(1, d), its tree, and its finite quotients")]
struct Cli {
    /// Seed for randomized suites; defaults to the committed seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Numeric tolerance; defaults to the committed tolerance.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Also write the JSON report to this file.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum VariantArg {
    Plain,
    Extended,
}

#[derive(Copy, Clone, Debug, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum StrategyArg {
    Brute,
    Structured,
}

#[derive(Subcommand, Debug, Serialize)]
#[serde(untagged)]
enum Command {
    /// Orders of d modulo q and q^s.
    Order {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        q: u64,
        #[arg(long)]
        s: u32,
    },
    /// Tree distance between two points `residue@level` (+ offsets).
    TreeDist {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        v1: String,
        #[arg(long)]
        v2: String,
        #[arg(long, default_value_t = 0.0)]
        o1: f64,
        #[arg(long, default_value_t = 0.0)]
        o2: f64,
    },
    /// Distance in the warped product of the tree and the line.
    WarpedDist {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        v1: String,
        #[arg(long, default_value_t = 0.0)]
        o1: f64,
        #[arg(long)]
        w1: f64,
        #[arg(long)]
        v2: String,
        #[arg(long, default_value_t = 0.0)]
        o2: f64,
        #[arg(long)]
        w2: f64,
    },
    /// Flow-space distance between two generalized geodesics.
    ///
    /// Geodesics are JSON objects, or vertices standing for their rays to ω.
    FlowDist {
        #[arg(long)]
        d: u64,
        #[arg(long, conflicts_with = "v1", required_unless_present = "v1")]
        c1: Option<String>,
        #[arg(long, conflicts_with = "v2", required_unless_present = "v2")]
        c2: Option<String>,
        #[arg(long)]
        v1: Option<String>,
        #[arg(long)]
        v2: Option<String>,
        /// Flow both geodesics by this time first.
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        tau: f64,
        /// Fiber coordinates; when both are given the horizontal distance is reported too.
        #[arg(long, requires = "w2", allow_negative_numbers = true)]
        w1: Option<f64>,
        #[arg(long, requires = "w1", allow_negative_numbers = true)]
        w2: Option<f64>,
    },
    /// Subgroups of the finite quotient.
    Enumerate {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        q: u64,
        #[arg(long)]
        s: u32,
        #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
        variant: VariantArg,
        #[arg(long, value_enum, default_value_t = StrategyArg::Brute)]
        strategy: StrategyArg,
    },
    /// Classification of every hyper-elementary subgroup.
    Classify {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        q: u64,
        #[arg(long)]
        s: u32,
        #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
        variant: VariantArg,
        #[arg(long, value_enum, default_value_t = StrategyArg::Brute)]
        strategy: StrategyArg,
    },
    /// Index-or-rotation dichotomy over all hyper-elementary subgroups.
    #[command(name = "corollary-c2", alias = "index-dichotomy")]
    IndexDichotomy {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        q: u64,
        #[arg(long)]
        s: u32,
        #[arg(long)]
        n: u64,
        #[arg(long, value_enum, default_value_t = VariantArg::Plain)]
        variant: VariantArg,
    },
    /// Contraction of k ↦ k for a pair of group elements `x,k`.
    Case1Check {
        #[arg(long)]
        d: u64,
        #[arg(long, allow_hyphen_values = true)]
        g: String,
        #[arg(long, allow_hyphen_values = true)]
        h: String,
        #[arg(long)]
        n: u64,
        /// Edge length; defaults to 4n².
        #[arg(long)]
        m: Option<u64>,
    },
    /// The flowed-ray estimate for the given n and δ.
    Case2Check {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        n: u64,
        #[arg(long)]
        delta: f64,
    },
    /// Lipschitz bound of the canonical map into the nerve of a cover.
    NerveCheck {
        /// Cover fixture JSON; defaults to the interval fixture.
        #[arg(long)]
        fixture: Option<PathBuf>,
        #[arg(long)]
        beta: Option<f64>,
        /// Dimension bound N; defaults to the cover dimension.
        #[arg(long)]
        dim_bound: Option<usize>,
    },
    /// Fold T_q into T_(q²) and compare on finite balls.
    Fold {
        #[arg(long)]
        q: u64,
        #[arg(long, default_value_t = 4)]
        radius: u32,
        /// Number of successive folds.
        #[arg(long, default_value_t = 1)]
        steps: u32,
    },
    /// Product-of-prime-powers model of T_d.
    Diagonal {
        #[arg(long)]
        d: u64,
        #[arg(long, default_value_t = 3)]
        radius: u32,
    },
    /// Points of period m under x ↦ d·x on the circle.
    Periodic {
        #[arg(long)]
        d: u64,
        #[arg(long)]
        m: u32,
    },
    /// Runs a named invariant suite, or `all`.
    Verify { suite: String },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Order { .. } => "order",
            Command::TreeDist { .. } => "tree-dist",
            Command::WarpedDist { .. } => "warped-dist",
            Command::FlowDist { .. } => "flow-dist",
            Command::Enumerate { .. } => "enumerate",
            Command::Classify { .. } => "classify",
            Command::IndexDichotomy { .. } => "corollary-c2",
            Command::Case1Check { .. } => "case1-check",
            Command::Case2Check { .. } => "case2-check",
            Command::NerveCheck { .. } => "nerve-check",
            Command::Fold { .. } => "fold",
            Command::Diagonal { .. } => "diagonal",
            Command::Periodic { .. } => "periodic",
            Command::Verify { .. } => "verify",
        }
    }
}

/// A failed run: usage problems exit with 2, failed assertions with 1.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind) = match e {
            Error::Hypothesis(_) => (1, "hypothesis"),
            Error::Certification(_) => (1, "certification"),
            Error::NonConvergence(_) => (1, "non-convergence"),
            _ => (2, "invalid-config"),
        };
        Failure { code, kind, message: e.to_string() }
    }
}

fn usage(message: impl Into<String>) -> Failure {
    Failure { code: 2, kind: "usage", message: message.into() }
}

struct Outcome {
    result: Value,
    pass: bool,
}

fn ok<T: Serialize>(value: &T, pass: bool) -> Result<Outcome, Failure> {
    Ok(Outcome { result: serde_json::to_value(value).expect("serializable"), pass })
}

fn vertex(label: &str, d: u64) -> Result<TreeVertex, Failure> {
    let v = TreeVertex::parse(label)?;
    Ok(tree::vertex_canonicalize(&v.residue, v.level, d))
}

fn point(label: &str, offset: f64, d: u64) -> Result<TreePoint, Failure> {
    Ok(TreePoint::new(vertex(label, d)?, offset)?)
}

fn gamma_element(text: &str) -> Result<GammaElement, Failure> {
    let (x, k) = text.split_once(',').ok_or_else(|| usage(format!("group element '{text}' is not 'x,k'")))?;
    let k = k.trim().parse().map_err(|_| usage(format!("bad exponent in '{text}'")))?;
    Ok(GammaElement::new(parse_rational(x)?, k))
}

fn geodesic(json: &Option<String>, label: &Option<String>, d: u64) -> Result<GeneralizedGeodesic, Failure> {
    match (json, label) {
        (Some(text), _) => {
            let c: GeneralizedGeodesic =
                serde_json::from_str(text).map_err(|e| usage(format!("geodesic JSON: {e}")))?;
            c.validate(d)?;
            Ok(c)
        }
        (None, Some(v)) => Ok(flow::psi(&point(v, 0.0, d)?)),
        (None, None) => Err(usage("need a geodesic or a vertex")),
    }
}

fn group(d: u64, q: u64, s: u32, variant: VariantArg) -> Result<FiniteSemidirect, Failure> {
    Ok(match variant {
        VariantArg::Plain => FiniteSemidirect::plain(d, q, s)?,
        VariantArg::Extended => FiniteSemidirect::extended(d, q, s)?,
    })
}

fn strategy(s: StrategyArg) -> Enumeration {
    match s {
        StrategyArg::Brute => Enumeration::Brute,
        StrategyArg::Structured => Enumeration::Structured,
    }
}

fn dispatch(cmd: &Command, seed: u64, tol: f64) -> Result<Outcome, Failure> {
    match cmd {
        Command::Order { d, q, s } => ok(&quotient::multiplicative_order(*d, *q, *s)?, true),
        Command::TreeDist { d, v1, v2, o1, o2 } => {
            let (p1, p2) = (point(v1, *o1, *d)?, point(v2, *o2, *d)?);
            let result = json!({
                "distance": tree::point_distance(&p1, &p2, *d),
                "vertexDistance": tree::tree_distance(&p1.base, &p2.base, *d),
                "meet": tree::meet_toward_omega(&p1.base, &p2.base, *d).to_string(),
                "busemann": [tree::busemann(&p1), tree::busemann(&p2)],
                "comparable": p1.comparable(&p2, *d),
            });
            Ok(Outcome { result, pass: true })
        }
        Command::WarpedDist { d, v1, o1, w1, v2, o2, w2 } => {
            let a = SpacePoint::new(point(v1, *o1, *d)?, *w1)?;
            let b = SpacePoint::new(point(v2, *o2, *d)?, *w2)?;
            let result = json!({
                "distance": warped::distance(&a, &b, *d, tol)?,
                "treeLowerBound": warped::tree_lower_bound(&a, &b, *d),
                "comparable": a.z.comparable(&b.z, *d),
            });
            Ok(Outcome { result, pass: true })
        }
        Command::FlowDist { d, c1, c2, v1, v2, tau, w1, w2 } => {
            let (g1, g2) = (geodesic(c1, v1, *d)?, geodesic(c2, v2, *d)?);
            let band = flow::flow_band_check(&g1, &g2, *tau, *d, tol);
            let (f1, f2) = (flow::flow(&g1, *tau), flow::flow(&g2, *tau));
            let mut result = json!({
                "distance": flow::fs_tree_distance(&f1, &f2, *d),
                "band": band,
            });
            if let (Some(w1), Some(w2)) = (w1, w2) {
                let h1 = HorizontalFlowPoint { geodesic: f1, w: *w1 };
                let h2 = HorizontalFlowPoint { geodesic: f2, w: *w2 };
                result["hfsDistance"] = json!(flow::hfs_distance(&h1, &h2, *d, tol)?);
            }
            Ok(Outcome { result, pass: band.holds })
        }
        Command::Enumerate { d, q, s, variant, strategy: st } => {
            let f = group(*d, *q, *s, *variant)?;
            let subgroups = f.enumerate_subgroups(strategy(*st))?;
            let list: Vec<Value> =
                subgroups.iter().map(|h| json!({"order": h.order(), "generators": h.generators})).collect();
            let result = json!({"groupOrder": f.order(), "count": subgroups.len(), "subgroups": list});
            Ok(Outcome { result, pass: true })
        }
        Command::Classify { d, q, s, variant, strategy: st } => {
            let t = group(*d, *q, *s, *variant)?.classification_table(strategy(*st))?;
            let pass = t.classified == t.hyper_elementary && t.verified == t.classified && t.deviations == 0;
            ok(&t, pass)
        }
        Command::IndexDichotomy { d, q, s, n, variant } => {
            let r = group(*d, *q, *s, *variant)?.index_dichotomy_check(*n)?;
            let pass = r.pass;
            ok(&r, pass)
        }
        Command::Case1Check { d, g, h, n, m } => {
            let m = m.unwrap_or(4 * n * n);
            let r = quotient::case1_contraction_check(&gamma_element(g)?, &gamma_element(h)?, *d, *n, m)?;
            let pass = r.displacement_bound_holds && r.contraction_holds;
            ok(&r, pass)
        }
        Command::Case2Check { d, n, delta } => {
            let r = flow::case2_estimate_check(*n, *delta, *d)?;
            let pass = r.holds;
            ok(&r, pass)
        }
        Command::NerveCheck { fixture, beta, dim_bound } => {
            let (fx, space, cover) = match fixture {
                Some(path) => {
                    let text = std::fs::read_to_string(path)
                        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                    CoverFixture::load(&text)?
                }
                None => {
                    let fx = CoverFixture::interval_standard();
                    let space = fx.metric.build()?;
                    let cover = nerve::Cover::new(&space, fx.members.clone())?;
                    (fx, space, cover)
                }
            };
            let beta = beta.or(fx.beta).ok_or_else(|| usage("fixture has no beta; pass --beta"))?;
            let lip = nerve::lipschitz_check(&space, &cover, beta, *dim_bound, None)?;
            let axioms = fx.action.as_ref().map(|a| nerve::f_cover_axioms(&cover, a)).transpose()?;
            let pass = lip.holds && axioms.as_ref().map_or(true, |a| a.holds);
            let result = json!({
                "points": space.len(),
                "members": fx.members.len(),
                "dimension": nerve::cover_dimension(&cover),
                "lipschitz": lip,
                "fCover": axioms,
            });
            Ok(Outcome { result, pass })
        }
        Command::Fold { q, radius, steps } => {
            let reports = fold::iterated_fold(*q, *steps, *radius)?;
            let pass = reports.iter().all(|r| r.holds);
            let result = json!({"reached": reports.last().map(|r| r.target), "folds": reports});
            Ok(Outcome { result, pass })
        }
        Command::Diagonal { d, radius } => {
            let (_, r) = fold::diagonal_model(*d, *radius)?;
            let pass = r.holds;
            ok(&r, pass)
        }
        Command::Periodic { d, m } => {
            let count = flow::count_periodic(*m, *d)?;
            let want = arith::d_pow(*d, *m as i64).to_integer() - 1;
            let verified = want == count.into();
            Ok(Outcome { result: json!({"count": count, "verified": verified}), pass: verified })
        }
        Command::Verify { suite } => {
            if suite == "all" {
                let reports = verify::run_all(seed)?;
                let pass = reports.iter().all(|r| r.holds);
                let result = json!({
                    "suite": "all",
                    "passed": reports.iter().map(|r| r.passed).sum::<u64>(),
                    "total": reports.iter().map(|r| r.total).sum::<u64>(),
                    "reports": reports,
                });
                Ok(Outcome { result, pass })
            } else {
                let r = verify::run_suite(suite, seed)?;
                let pass = r.holds;
                ok(&r, pass)
            }
        }
    }
}

/// Rounds every non-integer number to 15 significant digits.
fn round_floats(v: Value) -> Value {
    match v {
        Value::Number(n) if n.is_f64() => {
            let x = n.as_f64().expect("f64");
            let r: f64 = format!("{x:.14e}").parse().expect("round trip");
            serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
        }
        Value::Array(a) => Value::Array(a.into_iter().map(round_floats).collect()),
        Value::Object(o) => Value::Object(o.into_iter().map(|(k, v)| (k, round_floats(v))).collect()),
        other => other,
    }
}

fn emit(report: Value, out: Option<&PathBuf>) -> Result<(), String> {
    let text = serde_json::to_string_pretty(&round_floats(report)).expect("serializable") + "\n";
    print!("{text}");
    if let Some(path) = out {
        std::fs::write(path, &text).map_err(|e| format!("cannot write {}: {e}", path.display()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let defaults: Value = serde_json::from_str(DEFAULTS).expect("committed defaults parse");
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let report = json!({
                "schemaVersion": SCHEMA_VERSION,
                "error": {"kind": "usage", "message": e.to_string().trim_end()},
            });
            let _ = emit(report, None);
            return ExitCode::from(2);
        }
    };
    let seed = cli.seed.unwrap_or_else(|| defaults["seed"].as_u64().expect("default seed"));
    let tol = cli.tolerance.unwrap_or_else(|| defaults["tolerance"].as_f64().expect("default tolerance"));

    let mut config = Map::new();
    config.insert("seed".into(), json!(seed));
    config.insert("tolerance".into(), json!(tol));
    config.insert("out".into(), json!(cli.out));
    if let Value::Object(args) = serde_json::to_value(&cli.command).expect("serializable") {
        config.extend(args);
    }
    let mut report = Map::new();
    report.insert("schemaVersion".into(), json!(SCHEMA_VERSION));
    report.insert("command".into(), json!(cli.command.name()));
    report.insert("config".into(), Value::Object(config));

    let code = if !(tol > 0.0 && tol.is_finite()) {
        report.insert("error".into(), json!({"kind": "usage", "message": "tolerance must be positive"}));
        2
    } else {
        match dispatch(&cli.command, seed, tol) {
            Ok(Outcome { result, pass }) => {
                match result {
                    Value::Object(fields) => report.extend(fields),
                    other => {
                        report.insert("result".into(), other);
                    }
                }
                report.insert("pass".into(), json!(pass));
                if pass {
                    0
                } else {
                    1
                }
            }
            Err(f) => {
                report.insert("error".into(), json!({"kind": f.kind, "message": f.message}));
                f.code
            }
        }
    };
    if let Err(msg) = emit(Value::Object(report), cli.out.as_ref()) {
        eprintln!("{msg}");
        return ExitCode::from(2);
    }
    ExitCode::from(code)
}
