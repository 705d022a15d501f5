//! Instance files, seeded random instances and result tables.
//!
//! An instance is one JSON document:
//!
//! ```json
//! {
//!   "space": { "points": 3, "edges": [[0, 1, 1.0], [1, 2, 1.0]], "measure": [0.5, 0.25, 0.25] },
//!   "families": [
//!     { "kind": "paths", "name": "ends", "sources": [0], "targets": [2] },
//!     { "kind": "explicit", "name": "two", "measures": [[[0, 1.0]], [[1, 0.5], [2, 0.5]]] }
//!   ],
//!   "curves": [{ "name": "walk", "nodes": [0, [0, 1, 0.5], 1], "times": [0, 0.3, 1] }],
//!   "plans": [{ "name": "rho", "curves": ["walk"], "probs": [1] }],
//!   "columns": { "f": [0, 1, "inf"] }
//! }
//! ```
//!
//! Curve locations are a point id or `[u, v, frac]`, the point at fraction
//! `frac` of the way from `u` to `v`. Column entries may be `"inf"`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::curves::{Location, ParametricCurve};
use crate::error::{Error, Result};
use crate::measure::{CurveMap, DiscreteMeasure, FamilyKind, MeasureFamily};
use crate::plans::CurvePlan;
use crate::space::{Edge, MetricMeasureSpace, Support};

/// Largest random instance [`generate_random_instance`] will build.
pub const MAX_RANDOM_POINTS: usize = 200;
pub const MAX_RANDOM_MEASURES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub space: SpaceSpec,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub families: Vec<FamilySpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub curves: Vec<NamedCurve>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub plans: Vec<PlanSpec>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub columns: BTreeMap<String, Column>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceSpec {
    pub points: usize,
    pub edges: Vec<(usize, usize, f64)>,
    pub measure: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_measure: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coords: Option<Vec<[f64; 2]>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum FamilySpec {
    Explicit {
        name: String,
        #[serde(default)]
        support: Support,
        measures: Vec<Vec<(usize, f64)>>,
    },
    Paths {
        name: String,
        sources: Vec<usize>,
        targets: Vec<usize>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        max_hops: Option<usize>,
        #[serde(default)]
        support: Support,
    },
    Curves {
        name: String,
        curves: Vec<CurveRef>,
        #[serde(default = "default_map")]
        map: CurveMap,
        #[serde(default)]
        support: Support,
    },
}

fn default_map() -> CurveMap {
    CurveMap::J
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LocationSpec {
    Node(usize),
    Between(usize, usize, f64),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveSpec {
    pub nodes: Vec<LocationSpec>,
    /// Uniform when omitted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedCurve {
    pub name: String,
    pub nodes: Vec<LocationSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub times: Option<Vec<f64>>,
}

/// A curve given inline or by the name of an entry of `curves`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CurveRef {
    Name(String),
    Inline(CurveSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanSpec {
    pub name: String,
    pub curves: Vec<CurveRef>,
    #[serde(rename = "probs", alias = "probabilities")]
    pub probabilities: Vec<f64>,
}

/// Per-point values; `"inf"` and `"-inf"` stand for the infinities.
#[derive(Clone, Debug, PartialEq)]
pub struct Column(pub Vec<f64>);

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Real {
    Number(f64),
    Text(String),
}

impl Serialize for Column {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let items: Vec<Real> = self
            .0
            .iter()
            .map(|&v| if v.is_finite() { Real::Number(v) } else { Real::Text(format_real(v)) })
            .collect();
        items.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Column {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let items = Vec::<Real>::deserialize(d)?;
        items
            .into_iter()
            .map(|r| match r {
                Real::Number(v) => Ok(v),
                Real::Text(t) => parse_real(&t).ok_or_else(|| {
                    serde::de::Error::custom(format!("expected a number or \"inf\", got \"{t}\""))
                }),
            })
            .collect::<std::result::Result<Vec<_>, _>>()
            .map(Column)
    }
}

/// Shortest round-trip decimal, with `inf`, `-inf` and `nan` spelled out.
pub fn format_real(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v == f64::INFINITY {
        "inf".into()
    } else if v == f64::NEG_INFINITY {
        "-inf".into()
    } else {
        let s = serde_json::to_string(&v).unwrap_or_else(|_| format!("{v:e}"));
        match s.strip_suffix(".0") {
            Some(int) => int.to_string(),
            None => s,
        }
    }
}

pub fn parse_real(s: &str) -> Option<f64> {
    match s.trim() {
        "inf" | "+inf" | "Infinity" => Some(f64::INFINITY),
        "-inf" | "-Infinity" => Some(f64::NEG_INFINITY),
        t => t.parse().ok(),
    }
}

/// A fully validated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct Instance {
    pub name: Option<String>,
    pub space: MetricMeasureSpace,
    pub families: Vec<MeasureFamily>,
    pub curves: Vec<(String, ParametricCurve)>,
    pub plans: Vec<(String, CurvePlan)>,
    pub columns: BTreeMap<String, Vec<f64>>,
}

fn build_curve(space: &MetricMeasureSpace, spec: &CurveSpec) -> Result<ParametricCurve> {
    let n = spec.nodes.len();
    let mut points = Vec::with_capacity(n);
    for (k, loc) in spec.nodes.iter().enumerate() {
        let loc = match *loc {
            LocationSpec::Node(x) => {
                if x >= space.num_points() {
                    return Err(Error::InvalidCurve(format!("location {k}: point {x} does not exist")));
                }
                Location::Node(x)
            }
            LocationSpec::Between(u, v, frac) => Location::between(space, u, v, frac)
                .map_err(|e| Error::InvalidCurve(format!("location {k}: {e}")))?,
        };
        points.push(loc);
    }
    let times = match &spec.times {
        Some(t) => t.clone(),
        None => (0..n).map(|i| i as f64 / (n.max(2) - 1) as f64).collect(),
    };
    ParametricCurve::new(space, points, times)
}

fn curve_spec(curve: &ParametricCurve) -> CurveSpec {
    let nodes = curve
        .points()
        .iter()
        .map(|loc| match *loc {
            Location::Node(x) => LocationSpec::Node(x),
            Location::OnEdge { u, v, t, .. } => LocationSpec::Between(u, v, t),
        })
        .collect();
    CurveSpec { nodes, times: Some(curve.times().to_vec()) }
}

fn resolve_curves(
    space: &MetricMeasureSpace,
    named: &BTreeMap<&str, &ParametricCurve>,
    refs: &[CurveRef],
    owner: &str,
) -> Result<Vec<ParametricCurve>> {
    refs.iter()
        .enumerate()
        .map(|(k, r)| match r {
            CurveRef::Name(n) => named
                .get(n.as_str())
                .map(|c| (*c).clone())
                .ok_or_else(|| Error::Instance(format!("{owner}: unknown curve '{n}'"))),
            CurveRef::Inline(spec) => {
                build_curve(space, spec).map_err(|e| Error::Instance(format!("{owner}: curve {k}: {e}")))
            }
        })
        .collect()
}

impl Instance {
    pub fn from_file(file: &InstanceFile) -> Result<Self> {
        let s = &file.space;
        if s.measure.len() != s.points {
            return Err(Error::Instance(format!(
                "space.measure has {} entries for {} points",
                s.measure.len(),
                s.points
            )));
        }
        let edges = s.edges.iter().map(|&(u, v, length)| Edge { u, v, length }).collect();
        let space = MetricMeasureSpace::new(s.measure.clone(), edges, s.edge_measure.clone(), s.coords.clone())?;

        let mut curves = Vec::with_capacity(file.curves.len());
        for c in &file.curves {
            if curves.iter().any(|(n, _)| n == &c.name) {
                return Err(Error::Instance(format!("duplicate curve name '{}'", c.name)));
            }
            let spec = CurveSpec { nodes: c.nodes.clone(), times: c.times.clone() };
            let curve = build_curve(&space, &spec).map_err(|e| Error::Instance(format!("curve '{}': {e}", c.name)))?;
            curves.push((c.name.clone(), curve));
        }
        let named: BTreeMap<&str, &ParametricCurve> = curves.iter().map(|(n, c)| (n.as_str(), c)).collect();

        let mut families = Vec::with_capacity(file.families.len());
        for spec in &file.families {
            let family = match spec {
                FamilySpec::Explicit { name, support, measures } => {
                    let measures = measures
                        .iter()
                        .enumerate()
                        .map(|(i, pairs)| {
                            DiscreteMeasure::from_pairs(pairs.iter().copied())
                                .map_err(|e| Error::Instance(format!("family '{name}': measure {i}: {e}")))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    MeasureFamily { name: name.clone(), kind: FamilyKind::Explicit { measures, support: *support } }
                }
                FamilySpec::Paths { name, sources, targets, max_hops, support } => {
                    MeasureFamily::paths(name.clone(), sources.clone(), targets.clone(), *max_hops, *support)?
                }
                FamilySpec::Curves { name, curves: refs, map, support } => {
                    let cs = resolve_curves(&space, &named, refs, &format!("family '{name}'"))?;
                    MeasureFamily::curves(name.clone(), cs, *map, *support)?
                }
            };
            family.validate(&space)?;
            if families.iter().any(|f: &MeasureFamily| f.name == family.name) {
                return Err(Error::Instance(format!("duplicate family name '{}'", family.name)));
            }
            families.push(family);
        }

        let mut plans = Vec::with_capacity(file.plans.len());
        for p in &file.plans {
            let owner = format!("plan '{}'", p.name);
            let cs = resolve_curves(&space, &named, &p.curves, &owner)?;
            let plan = CurvePlan::new(cs, p.probabilities.clone())
                .map_err(|e| Error::Instance(format!("{owner}: {e}")))?;
            plans.push((p.name.clone(), plan));
        }

        let mut columns = BTreeMap::new();
        for (name, col) in &file.columns {
            if col.0.len() != s.points {
                return Err(Error::Instance(format!(
                    "column '{name}' has {} entries for {} points",
                    col.0.len(),
                    s.points
                )));
            }
            columns.insert(name.clone(), col.0.clone());
        }
        Ok(Self { name: file.name.clone(), space, families, curves, plans, columns })
    }

    /// Structured form; curves inside families and plans are written inline.
    pub fn to_file(&self) -> InstanceFile {
        let s = &self.space;
        let space = SpaceSpec {
            points: s.num_points(),
            edges: s.edges().iter().map(|e| (e.u, e.v, e.length)).collect(),
            measure: s.measure().to_vec(),
            edge_measure: Some(s.edge_measure().to_vec()),
            coords: s.coords().map(<[_]>::to_vec),
        };
        let inline = |cs: &[ParametricCurve]| cs.iter().map(|c| CurveRef::Inline(curve_spec(c))).collect();
        let families = self
            .families
            .iter()
            .map(|f| match &f.kind {
                FamilyKind::Explicit { measures, support } => FamilySpec::Explicit {
                    name: f.name.clone(),
                    support: *support,
                    measures: measures.iter().map(|m| m.iter().collect()).collect(),
                },
                FamilyKind::Paths { sources, targets, max_hops, support } => FamilySpec::Paths {
                    name: f.name.clone(),
                    sources: sources.clone(),
                    targets: targets.clone(),
                    max_hops: *max_hops,
                    support: *support,
                },
                FamilyKind::Curves { curves, map, support } => FamilySpec::Curves {
                    name: f.name.clone(),
                    curves: inline(curves),
                    map: *map,
                    support: *support,
                },
            })
            .collect();
        let curves = self
            .curves
            .iter()
            .map(|(name, c)| {
                let spec = curve_spec(c);
                NamedCurve { name: name.clone(), nodes: spec.nodes, times: spec.times }
            })
            .collect();
        let plans = self
            .plans
            .iter()
            .map(|(name, p)| PlanSpec {
                name: name.clone(),
                curves: inline(p.curves()),
                probabilities: p.probabilities().to_vec(),
            })
            .collect();
        let columns = self.columns.iter().map(|(k, v)| (k.clone(), Column(v.clone()))).collect();
        InstanceFile { name: self.name.clone(), space, families, curves, plans, columns }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile = serde_json::from_str(text)?;
        Self::from_file(&file)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_file()).expect("instances serialize");
        s.push('\n');
        s
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Instance(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| Error::Instance(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn family(&self, name: &str) -> Result<&MeasureFamily> {
        self.families
            .iter()
            .find(|f| f.name == name)
            .ok_or_else(|| Error::Instance(format!("no family named '{name}'")))
    }

    pub fn curve(&self, name: &str) -> Result<&ParametricCurve> {
        self.curves
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, c)| c)
            .ok_or_else(|| Error::Instance(format!("no curve named '{name}'")))
    }

    pub fn plan(&self, name: &str) -> Result<&CurvePlan> {
        self.plans
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, p)| p)
            .ok_or_else(|| Error::Instance(format!("no plan named '{name}'")))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.columns
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Instance(format!("no column named '{name}'")))
    }
}

/// Random connected weighted graph with an explicit family named `random`.
///
/// About one point in ten gets zero mass; members are supported on the
/// remaining points, each of which is included with probability `sparsity`.
pub fn generate_random_instance(seed: u64, n_points: usize, n_measures: usize, sparsity: f64) -> Result<Instance> {
    if n_points == 0 || n_points > MAX_RANDOM_POINTS {
        return Err(Error::InvalidArgument(format!(
            "n_points must lie in [1, {MAX_RANDOM_POINTS}] (got {n_points})"
        )));
    }
    if n_measures == 0 || n_measures > MAX_RANDOM_MEASURES {
        return Err(Error::InvalidArgument(format!(
            "n_measures must lie in [1, {MAX_RANDOM_MEASURES}] (got {n_measures})"
        )));
    }
    if !(sparsity > 0.0 && sparsity <= 1.0) {
        return Err(Error::InvalidArgument(format!("sparsity must lie in (0, 1] (got {sparsity})")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut measure: Vec<f64> = (0..n_points)
        .map(|_| if rng.random_bool(0.1) { 0.0 } else { rng.random_range(0.1..1.0) })
        .collect();
    if measure.iter().all(|&m| m == 0.0) {
        measure[0] = 1.0;
    }
    let mut edges = Vec::new();
    for x in 1..n_points {
        let parent = rng.random_range(0..x);
        edges.push(Edge { u: parent, v: x, length: rng.random_range(0.5..2.0) });
    }
    let extra = n_points / 2;
    for _ in 0..extra {
        let u = rng.random_range(0..n_points);
        let v = rng.random_range(0..n_points);
        let length = rng.random_range(0.5..2.0);
        if u != v && !edges.iter().any(|e| (e.u, e.v) == (u.min(v), u.max(v)) || (e.u, e.v) == (u.max(v), u.min(v))) {
            edges.push(Edge { u: u.min(v), v: u.max(v), length });
        }
    }
    let positive: Vec<usize> = (0..n_points).filter(|&x| measure[x] > 0.0).collect();
    let mut measures = Vec::with_capacity(n_measures);
    for _ in 0..n_measures {
        let mut pairs: Vec<(usize, f64)> = positive
            .iter()
            .filter(|_| rng.random_bool(sparsity))
            .map(|&x| (x, 0.0))
            .collect();
        if pairs.is_empty() {
            pairs.push((positive[rng.random_range(0..positive.len())], 0.0));
        }
        for pair in &mut pairs {
            pair.1 = rng.random_range(0.1..=1.0);
        }
        measures.push(DiscreteMeasure::from_pairs(pairs)?);
    }
    let space = MetricMeasureSpace::new(measure, edges, None, None)?;
    Ok(Instance {
        name: Some(format!("random-{seed}")),
        space,
        families: vec![MeasureFamily::explicit("random", measures)],
        curves: Vec::new(),
        plans: Vec::new(),
        columns: BTreeMap::new(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Ndjson,
}

impl FromStr for Format {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "ndjson" => Ok(Format::Ndjson),
            other => Err(Error::InvalidArgument(format!("unknown format '{other}' (csv or ndjson)"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ResultRecord {
    pub instance: String,
    pub family: String,
    pub p: f64,
    pub value: f64,
    pub dual_value: f64,
    pub gap: f64,
    pub iters: usize,
    pub wall_ms: f64,
    pub seed: u64,
}

pub const RESULT_COLUMNS: [&str; 9] =
    ["instance", "family", "p", "value", "dual_value", "gap", "iters", "wall_ms", "seed"];

impl ResultRecord {
    fn fields(&self) -> [String; 9] {
        [
            self.instance.clone(),
            self.family.clone(),
            format_real(self.p),
            format_real(self.value),
            format_real(self.dual_value),
            format_real(self.gap),
            self.iters.to_string(),
            format_real(self.wall_ms),
            self.seed.to_string(),
        ]
    }
}

pub fn write_results<W: Write>(records: &[ResultRecord], format: Format, out: W) -> Result<()> {
    match format {
        Format::Csv => {
            let mut w = csv::Writer::from_writer(out);
            w.write_record(RESULT_COLUMNS)?;
            for r in records {
                w.write_record(r.fields())?;
            }
            w.flush()?;
        }
        Format::Ndjson => {
            let mut out = out;
            for r in records {
                let mut line = String::from("{");
                for (k, (name, value)) in RESULT_COLUMNS.iter().zip(r.fields()).enumerate() {
                    if k > 0 {
                        line.push(',');
                    }
                    let numeric = !matches!(k, 0 | 1) && value.parse::<f64>().is_ok_and(f64::is_finite);
                    let value = if numeric { value } else { serde_json::Value::String(value).to_string() };
                    let _ = write!(line, "\"{name}\":{value}");
                }
                line.push('}');
                writeln!(out, "{line}")?;
            }
        }
    }
    Ok(())
}

/// Writes `records` to `path`, or to stdout when `path` is `None`.
pub fn emit_results(records: &[ResultRecord], format: Format, path: Option<&Path>) -> Result<()> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p)
                .map_err(|e| Error::Instance(format!("cannot write {}: {e}", p.display())))?;
            write_results(records, format, std::io::BufWriter::new(file))
        }
        None => write_results(records, format, std::io::stdout().lock()),
    }
}
