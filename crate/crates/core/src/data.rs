//! Longitudinal data model: time grids, the pooled grid, binary and ordinal
//! datasets, and report-based validation of raw records.

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Strictly increasing, nonempty list of observation times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<T>", into = "Vec<T>")]
#[serde(bound(serialize = "T: Real + Serialize", deserialize = "T: Real + Deserialize<'de>"))]
pub struct TimeGrid<T> {
    times: Vec<T>,
}

impl<T: Real> TimeGrid<T> {
    pub fn new(times: Vec<T>) -> Result<Self> {
        if times.is_empty() {
            return Err(Error::InvalidGrid("empty grid".into()));
        }
        if let Some(i) = times.iter().position(|t| !t.is_finite_real()) {
            return Err(Error::InvalidGrid(format!("non-finite time at index {i}")));
        }
        if let Some(i) = times.windows(2).position(|w| w[0] >= w[1]) {
            return Err(Error::InvalidGrid(format!(
                "times not strictly increasing at index {}",
                i + 1
            )));
        }
        Ok(Self { times })
    }

    pub fn times(&self) -> &[T] {
        &self.times
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Exact-match lookup of a time point.
    pub fn position(&self, t: T) -> Option<usize> {
        self.times
            .binary_search_by(|x| x.partial_cmp(&t).unwrap_or(Ordering::Less))
            .ok()
    }
}

impl<T: Real> TryFrom<Vec<T>> for TimeGrid<T> {
    type Error = Error;
    fn try_from(v: Vec<T>) -> Result<Self> {
        TimeGrid::new(v)
    }
}

impl<T> From<TimeGrid<T>> for Vec<T> {
    fn from(g: TimeGrid<T>) -> Vec<T> {
        g.times
    }
}

/// Union of all subject grids, with each subject's observed / unobserved
/// index partition of the union.
#[derive(Debug, Clone, PartialEq)]
pub struct PooledGrid<T> {
    grid: TimeGrid<T>,
    observed: Vec<Vec<usize>>,
    unobserved: Vec<Vec<usize>>,
}

impl<T: Real> PooledGrid<T> {
    pub fn grid(&self) -> &TimeGrid<T> {
        &self.grid
    }

    pub fn times(&self) -> &[T] {
        self.grid.times()
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn n_subjects(&self) -> usize {
        self.observed.len()
    }

    /// Pooled-grid indices of subject `i`'s observation times, in order.
    pub fn observed(&self, i: usize) -> &[usize] {
        &self.observed[i]
    }

    /// Pooled-grid indices where subject `i` has no observation.
    pub fn unobserved(&self, i: usize) -> &[usize] {
        &self.unobserved[i]
    }

    pub fn mask(&self, i: usize) -> Vec<bool> {
        let mut m = vec![false; self.len()];
        for &k in &self.observed[i] {
            m[k] = true;
        }
        m
    }

    /// `true` when every subject is observed on the full pooled grid.
    pub fn is_common(&self) -> bool {
        self.unobserved.iter().all(|u| u.is_empty())
    }
}

/// Builds the pooled grid from the subject grids (exact time equality).
pub fn pool_grids<T: Real>(grids: &[TimeGrid<T>]) -> Result<PooledGrid<T>> {
    if grids.is_empty() {
        return Err(Error::NoSubjects);
    }
    let mut all: Vec<T> = grids.iter().flat_map(|g| g.times().iter().copied()).collect();
    all.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    all.dedup();
    let grid = TimeGrid::new(all)?;

    let mut observed = Vec::with_capacity(grids.len());
    let mut unobserved = Vec::with_capacity(grids.len());
    for g in grids {
        let idx: Vec<usize> = g
            .times()
            .iter()
            .map(|&t| grid.position(t).expect("subject time present in union"))
            .collect();
        let mut mask = vec![false; grid.len()];
        for &k in &idx {
            mask[k] = true;
        }
        unobserved.push((0..grid.len()).filter(|&k| !mask[k]).collect());
        observed.push(idx);
    }
    Ok(PooledGrid {
        grid,
        observed,
        unobserved,
    })
}

/// One subject of a binary dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct BinarySubject<T> {
    pub id: String,
    pub grid: TimeGrid<T>,
    pub responses: Vec<u8>,
}

/// Repeated binary responses on `n` subjects, possibly unbalanced.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryDataset<T> {
    subjects: Vec<BinarySubject<T>>,
    pooled: PooledGrid<T>,
}

impl<T: Real> BinaryDataset<T> {
    pub fn new(subjects: Vec<BinarySubject<T>>) -> Result<Self> {
        let raw: Vec<RawSubject<T>> = subjects
            .iter()
            .map(|s| RawSubject {
                id: s.id.clone(),
                times: s.grid.times().to_vec(),
                responses: s.responses.iter().map(|&r| r as i64).collect(),
            })
            .collect();
        let report = validate_binary(&raw);
        if !report.is_empty() {
            return Err(Error::InvalidDataset(report));
        }
        let grids: Vec<TimeGrid<T>> = subjects.iter().map(|s| s.grid.clone()).collect();
        let pooled = pool_grids(&grids)?;
        Ok(Self { subjects, pooled })
    }

    /// Builds a dataset from raw records, failing with the full report.
    pub fn from_raw(raw: &[RawSubject<T>]) -> Result<Self> {
        let report = validate_binary(raw);
        if !report.is_empty() {
            return Err(Error::InvalidDataset(report));
        }
        let subjects = raw
            .iter()
            .map(|r| {
                Ok(BinarySubject {
                    id: r.id.clone(),
                    grid: TimeGrid::new(r.times.clone())?,
                    responses: r.responses.iter().map(|&v| v as u8).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(subjects)
    }

    pub fn subjects(&self) -> &[BinarySubject<T>] {
        &self.subjects
    }

    pub fn pooled(&self) -> &PooledGrid<T> {
        &self.pooled
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.responses.len()).sum()
    }

    pub fn subject_index(&self, id: &str) -> Option<usize> {
        self.subjects.iter().position(|s| s.id == id)
    }

    pub fn to_raw(&self) -> Vec<RawSubject<T>> {
        self.subjects
            .iter()
            .map(|s| RawSubject {
                id: s.id.clone(),
                times: s.grid.times().to_vec(),
                responses: s.responses.iter().map(|&r| r as i64).collect(),
            })
            .collect()
    }
}

/// One subject of an ordinal dataset; responses take values in `1..=C`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalSubject<T> {
    pub id: String,
    pub grid: TimeGrid<T>,
    pub responses: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OrdinalDataset<T> {
    categories: u32,
    subjects: Vec<OrdinalSubject<T>>,
    pooled: PooledGrid<T>,
}

impl<T: Real> OrdinalDataset<T> {
    pub fn new(categories: u32, subjects: Vec<OrdinalSubject<T>>) -> Result<Self> {
        let raw: Vec<RawSubject<T>> = subjects
            .iter()
            .map(|s| RawSubject {
                id: s.id.clone(),
                times: s.grid.times().to_vec(),
                responses: s.responses.iter().map(|&r| r as i64).collect(),
            })
            .collect();
        let report = validate_ordinal(&raw, categories);
        if !report.is_empty() {
            return Err(Error::InvalidDataset(report));
        }
        let grids: Vec<TimeGrid<T>> = subjects.iter().map(|s| s.grid.clone()).collect();
        let pooled = pool_grids(&grids)?;
        Ok(Self {
            categories,
            subjects,
            pooled,
        })
    }

    /// Builds an ordinal dataset; `categories` defaults to the largest response.
    pub fn from_raw(raw: &[RawSubject<T>], categories: Option<u32>) -> Result<Self> {
        let c = categories.unwrap_or_else(|| {
            raw.iter()
                .flat_map(|r| r.responses.iter())
                .copied()
                .max()
                .unwrap_or(0)
                .clamp(0, u32::MAX as i64) as u32
        });
        let report = validate_ordinal(raw, c);
        if !report.is_empty() {
            return Err(Error::InvalidDataset(report));
        }
        let subjects = raw
            .iter()
            .map(|r| {
                Ok(OrdinalSubject {
                    id: r.id.clone(),
                    grid: TimeGrid::new(r.times.clone())?,
                    responses: r.responses.iter().map(|&v| v as u32).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(c, subjects)
    }

    pub fn categories(&self) -> u32 {
        self.categories
    }

    pub fn subjects(&self) -> &[OrdinalSubject<T>] {
        &self.subjects
    }

    pub fn pooled(&self) -> &PooledGrid<T> {
        &self.pooled
    }

    pub fn n_observations(&self) -> usize {
        self.subjects.iter().map(|s| s.responses.len()).sum()
    }
}

/// Unvalidated per-subject records, as read from a long-format file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSubject<T> {
    pub id: String,
    pub times: Vec<T>,
    pub responses: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidationIssue {
    pub subject: String,
    /// Observation index within the subject, when the issue is local.
    pub index: Option<usize>,
    pub message: String,
}

/// Every violated dataset invariant; empty iff the dataset is valid.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<ValidationIssue>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.issues.is_empty()
    }

    fn push(&mut self, subject: &str, index: Option<usize>, message: impl Into<String>) {
        self.issues.push(ValidationIssue {
            subject: subject.to_string(),
            index,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for issue in &self.issues {
            match issue.index {
                Some(i) => writeln!(f, "subject {:?}, index {}: {}", issue.subject, i, issue.message)?,
                None => writeln!(f, "subject {:?}: {}", issue.subject, issue.message)?,
            }
        }
        Ok(())
    }
}

fn validate_structure<T: Real>(raw: &[RawSubject<T>], report: &mut ValidationReport) {
    if raw.is_empty() {
        report.push("", None, "no subjects");
    }
    let mut seen = std::collections::HashSet::new();
    for s in raw {
        if !seen.insert(s.id.as_str()) {
            report.push(&s.id, None, "duplicate subject id");
        }
        if s.times.is_empty() {
            report.push(&s.id, None, "no observations");
        }
        if s.times.len() != s.responses.len() {
            report.push(
                &s.id,
                None,
                format!(
                    "{} times but {} responses",
                    s.times.len(),
                    s.responses.len()
                ),
            );
        }
        for (i, t) in s.times.iter().enumerate() {
            if !t.is_finite_real() {
                report.push(&s.id, Some(i), "non-finite time");
            }
        }
        for i in 1..s.times.len() {
            if s.times[i - 1] >= s.times[i] {
                report.push(&s.id, Some(i), "times not strictly increasing");
            }
        }
    }
}

/// Validates raw records as a binary dataset.
pub fn validate_binary<T: Real>(raw: &[RawSubject<T>]) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_structure(raw, &mut report);
    for s in raw {
        for (i, &y) in s.responses.iter().enumerate() {
            if y != 0 && y != 1 {
                report.push(&s.id, Some(i), format!("binary response {y} not in {{0,1}}"));
            }
        }
    }
    report
}

/// Validates raw records as an ordinal dataset with `categories` levels.
pub fn validate_ordinal<T: Real>(raw: &[RawSubject<T>], categories: u32) -> ValidationReport {
    let mut report = ValidationReport::default();
    validate_structure(raw, &mut report);
    if categories < 2 {
        report.push("", None, format!("need at least 2 categories, got {categories}"));
    }
    for s in raw {
        for (i, &y) in s.responses.iter().enumerate() {
            if y < 1 || y > categories as i64 {
                report.push(
                    &s.id,
                    Some(i),
                    format!("ordinal response {y} outside 1..={categories}"),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(v: &[f64]) -> TimeGrid<f64> {
        TimeGrid::new(v.to_vec()).unwrap()
    }

    #[test]
    fn pooling_two_overlapping_grids() {
        let p = pool_grids(&[grid(&[0., 1., 2.]), grid(&[1., 2., 3.])]).unwrap();
        assert_eq!(p.times(), &[0., 1., 2., 3.]);
        assert_eq!(p.unobserved(0), &[3]);
        assert_eq!(p.unobserved(1), &[0]);
        assert_eq!(p.observed(1), &[1, 2, 3]);
    }

    #[test]
    fn pooling_single_and_duplicate_grids() {
        let p = pool_grids(&[grid(&[0., 5., 10.])]).unwrap();
        assert_eq!(p.times(), &[0., 5., 10.]);
        assert!(p.unobserved(0).is_empty());

        let p = pool_grids(&[grid(&[0., 2.]), grid(&[0., 2.])]).unwrap();
        assert_eq!(p.times(), &[0., 2.]);
        assert!(p.is_common());
    }

    #[test]
    fn pooling_nothing_fails() {
        let err = pool_grids::<f64>(&[]).unwrap_err();
        assert_eq!(err.to_string(), "no subjects");
    }

    #[test]
    fn grid_rejects_ties_and_empty() {
        assert!(TimeGrid::new(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TimeGrid::<f64>::new(vec![]).is_err());
        assert!(TimeGrid::new(vec![2.0, 1.0]).is_err());
    }

    fn raw(id: &str, t: &[f64], y: &[i64]) -> RawSubject<f64> {
        RawSubject {
            id: id.into(),
            times: t.to_vec(),
            responses: y.to_vec(),
        }
    }

    #[test]
    fn valid_binary_set_has_empty_report() {
        let r = validate_binary(&[raw("a", &[0., 1.], &[0, 1]), raw("b", &[1.], &[1])]);
        assert!(r.is_empty(), "{r}");
    }

    #[test]
    fn binary_value_two_is_reported_with_location() {
        let r = validate_binary(&[raw("a", &[0., 1.], &[0, 1]), raw("b", &[0., 1., 2.], &[1, 2, 0])]);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].subject, "b");
        assert_eq!(r.issues[0].index, Some(1));
    }

    #[test]
    fn ordinal_out_of_range_is_flagged() {
        let r = validate_ordinal(&[raw("a", &[0., 1.], &[4, 5])], 4);
        assert_eq!(r.issues.len(), 1);
        assert_eq!(r.issues[0].index, Some(1));
        assert!(r.issues[0].message.contains("outside"));
    }

    #[test]
    fn dataset_from_raw_carries_report() {
        let err = BinaryDataset::from_raw(&[raw("a", &[1., 0.], &[0, 3])]).unwrap_err();
        match err {
            Error::InvalidDataset(rep) => assert_eq!(rep.issues.len(), 2),
            other => panic!("unexpected {other}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn grids() -> impl Strategy<Value = Vec<TimeGrid<f64>>> {
            prop::collection::vec(prop::collection::btree_set(0i32..40, 1..12), 1..6).prop_map(|sets| {
                sets.into_iter()
                    .map(|s| TimeGrid::new(s.into_iter().map(|v| v as f64 * 0.5).collect()).unwrap())
                    .collect()
            })
        }

        proptest! {
            #[test]
            fn pooled_partitions_every_subject(gs in grids()) {
                let p = pool_grids(&gs).unwrap();
                for (i, g) in gs.iter().enumerate() {
                    prop_assert_eq!(p.observed(i).len() + p.unobserved(i).len(), p.len());
                    for (k, &idx) in p.observed(i).iter().enumerate() {
                        prop_assert_eq!(p.times()[idx], g.times()[k]);
                    }
                }
            }

            #[test]
            fn pooling_is_idempotent(gs in grids()) {
                let p = pool_grids(&gs).unwrap();
                let again = pool_grids(&[p.grid().clone(), p.grid().clone()]).unwrap();
                prop_assert_eq!(again.times(), p.times());
            }
        }
    }
}
