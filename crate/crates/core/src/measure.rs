//! Nonnegative measures on a finite index set and families of them.

use std::collections::BTreeMap;

use crate::curves::ParametricCurve;
use crate::error::{Error, Result};
use crate::graph;
use crate::space::{MetricMeasureSpace, Support};

/// A finitely supported nonnegative measure. Zero weights are not stored.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiscreteMeasure {
    weights: BTreeMap<usize, f64>,
    total: f64,
}

impl DiscreteMeasure {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn dirac(x: usize) -> Self {
        Self::from_pairs([(x, 1.0)]).expect("unit mass is valid")
    }

    /// Sums repeated indices. Rejects negative or non-finite weights.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (usize, f64)>) -> Result<Self> {
        let mut weights = BTreeMap::new();
        for (x, w) in pairs {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::InvalidMeasure(format!(
                    "weight at index {x} must be finite and nonnegative (got {w})"
                )));
            }
            if w > 0.0 {
                *weights.entry(x).or_insert(0.0) += w;
            }
        }
        let total = weights.values().sum();
        Ok(Self { weights, total })
    }

    /// Dense vector view: index `x` gets `values[x]`.
    pub fn from_dense(values: &[f64]) -> Result<Self> {
        Self::from_pairs(values.iter().copied().enumerate())
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    pub fn is_zero(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weight(&self, x: usize) -> f64 {
        self.weights.get(&x).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.weights.iter().map(|(&x, &w)| (x, w))
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn max_index(&self) -> Option<usize> {
        self.weights.keys().next_back().copied()
    }

    /// `∫ f dμ` for a dense density `f`.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.iter().map(|(x, w)| w * f[x]).sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::from_pairs(self.iter().map(|(x, w)| (x, c * w)))
    }

    /// First index carrying mass where `reference` vanishes.
    pub fn charges_null_point(&self, reference: &[f64]) -> Option<usize> {
        self.iter().map(|(x, _)| x).find(|&x| reference[x] == 0.0)
    }

    pub fn to_dense(&self, len: usize) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for (x, w) in self.iter() {
            out[x] += w;
        }
        out
    }

    /// Largest absolute weight difference, used for tolerance comparisons.
    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        let mut keys: Vec<usize> = self.weights.keys().chain(other.weights.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|x| (self.weight(x) - other.weight(x)).abs())
            .fold(0.0, f64::max)
    }
}

/// `μ(X)`.
pub fn measure_total(mu: &DiscreteMeasure) -> f64 {
    mu.total()
}

/// Which pushforward turns a curve into a measure.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveMap {
    /// Arc-length measure (`J`).
    J,
    /// Time-occupation probability (`M`).
    M,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FamilyKind {
    Explicit { measures: Vec<DiscreteMeasure>, support: Support },
    Paths { sources: Vec<usize>, targets: Vec<usize>, max_hops: Option<usize>, support: Support },
    Curves { curves: Vec<ParametricCurve>, map: CurveMap, support: Support },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeasureFamily {
    pub name: String,
    pub kind: FamilyKind,
}

impl MeasureFamily {
    pub fn explicit(name: impl Into<String>, measures: Vec<DiscreteMeasure>) -> Self {
        Self { name: name.into(), kind: FamilyKind::Explicit { measures, support: Support::Nodes } }
    }

    pub fn paths(
        name: impl Into<String>,
        sources: Vec<usize>,
        targets: Vec<usize>,
        max_hops: Option<usize>,
        support: Support,
    ) -> Result<Self> {
        if let Some(x) = sources.iter().find(|x| targets.contains(x)) {
            return Err(Error::InvalidFamily(format!(
                "point {x} is both a source and a target"
            )));
        }
        if sources.is_empty() || targets.is_empty() {
            return Err(Error::InvalidFamily("path family needs sources and targets".into()));
        }
        Ok(Self { name: name.into(), kind: FamilyKind::Paths { sources, targets, max_hops, support } })
    }

    pub fn curves(
        name: impl Into<String>,
        curves: Vec<ParametricCurve>,
        map: CurveMap,
        support: Support,
    ) -> Result<Self> {
        if map == CurveMap::M && support == Support::Edges {
            return Err(Error::InvalidFamily(
                "occupation measures live on points; use support \"nodes\" with map \"m\"".into(),
            ));
        }
        Ok(Self { name: name.into(), kind: FamilyKind::Curves { curves, map, support } })
    }

    pub fn support(&self) -> Support {
        match &self.kind {
            FamilyKind::Explicit { support, .. }
            | FamilyKind::Paths { support, .. }
            | FamilyKind::Curves { support, .. } => *support,
        }
    }

    /// Checks indices against the space.
    pub fn validate(&self, space: &MetricMeasureSpace) -> Result<()> {
        let len = space.support_len(self.support());
        match &self.kind {
            FamilyKind::Explicit { measures, .. } => {
                for (i, mu) in measures.iter().enumerate() {
                    if let Some(x) = mu.max_index().filter(|&x| x >= len) {
                        return Err(Error::InvalidFamily(format!(
                            "family '{}': measure {i} charges index {x} outside [0, {len})",
                            self.name
                        )));
                    }
                }
            }
            FamilyKind::Paths { sources, targets, .. } => {
                if let Some(x) = sources.iter().chain(targets).find(|&&x| x >= space.num_points()) {
                    return Err(Error::InvalidFamily(format!(
                        "family '{}': endpoint {x} is not a point of the space",
                        self.name
                    )));
                }
            }
            FamilyKind::Curves { .. } => {}
        }
        Ok(())
    }
}

/// Result of expanding a family into explicit measures.
#[derive(Clone, Debug, PartialEq)]
pub struct Enumeration {
    pub measures: Vec<DiscreteMeasure>,
    /// Curves behind the measures, when the family is made of curves or paths.
    pub curves: Option<Vec<ParametricCurve>>,
    /// Set when the family had more members than `limit`.
    pub truncated: bool,
}

/// Lists the members of a family. Path families yield simple paths in
/// lexicographic order of their point sequences; each becomes its `J` image.
pub fn enumerate_family(
    family: &MeasureFamily,
    space: &MetricMeasureSpace,
    limit: usize,
) -> Result<Enumeration> {
    family.validate(space)?;
    match &family.kind {
        FamilyKind::Explicit { measures, .. } => {
            let truncated = measures.len() > limit;
            Ok(Enumeration {
                measures: measures.iter().take(limit).cloned().collect(),
                curves: None,
                truncated,
            })
        }
        FamilyKind::Paths { sources, targets, max_hops, support } => {
            let (paths, truncated) = graph::simple_paths(space, sources, targets, *max_hops, limit);
            let curves = paths
                .iter()
                .map(|p| ParametricCurve::through_nodes(space, p))
                .collect::<Result<Vec<_>>>()?;
            let measures = curves.iter().map(|c| c.j_measure(*support)).collect();
            Ok(Enumeration { measures, curves: Some(curves), truncated })
        }
        FamilyKind::Curves { curves, map, support } => {
            let truncated = curves.len() > limit;
            let kept: Vec<ParametricCurve> = curves.iter().take(limit).cloned().collect();
            let measures = kept
                .iter()
                .map(|c| match map {
                    CurveMap::J => c.j_measure(*support),
                    CurveMap::M => c.m_map(),
                })
                .collect();
            Ok(Enumeration { measures, curves: Some(kept), truncated })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::space::{build_grid_space, CellMeasure};

    #[test]
    fn totals() {
        assert_eq!(measure_total(&DiscreteMeasure::zero()), 0.0);
        assert_eq!(measure_total(&DiscreteMeasure::dirac(3)), 1.0);
        let mu = DiscreteMeasure::from_pairs([(0, 0.25), (1, 0.75)]).unwrap();
        assert_eq!(measure_total(&mu), 1.0);
    }

    #[test]
    fn rejects_negative_weight() {
        let err = DiscreteMeasure::from_pairs([(4, -1.0)]).unwrap_err();
        assert!(err.to_string().contains("index 4"));
    }

    #[test]
    fn explicit_family_preserves_order() {
        let s = build_grid_space(3, 1, CellMeasure::Uniform).unwrap();
        let ms: Vec<_> = (0..3).map(DiscreteMeasure::dirac).collect();
        let fam = MeasureFamily::explicit("d", ms.clone());
        let e = enumerate_family(&fam, &s, 10).unwrap();
        assert_eq!(e.measures, ms);
        assert!(!e.truncated);
        let e = enumerate_family(&fam, &s, 2).unwrap();
        assert!(e.truncated);
        assert_eq!(e.measures.len(), 2);
    }

    #[test]
    fn single_edge_path_family() {
        let s = build_grid_space(2, 1, CellMeasure::Uniform).unwrap();
        let fam = MeasureFamily::paths("p", vec![0], vec![1], None, Support::Nodes).unwrap();
        let e = enumerate_family(&fam, &s, 100).unwrap();
        assert_eq!(e.measures.len(), 1);
        assert_eq!(e.measures[0].total(), 1.0);
        assert_eq!(e.measures[0].weight(0), 0.5);
        let fam = MeasureFamily::paths("p", vec![0], vec![1], None, Support::Edges).unwrap();
        let e = enumerate_family(&fam, &s, 100).unwrap();
        assert_eq!(e.measures[0].weight(0), 1.0);
    }

    #[test]
    fn overlapping_endpoints_rejected() {
        assert!(MeasureFamily::paths("p", vec![0, 1], vec![1], None, Support::Nodes).is_err());
    }
}
