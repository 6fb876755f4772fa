//! Sections of the tautological operator family over a refinement
//! schedule extended by its limit point: fiber t carries β^{D_t}(S), the
//! fiber at infinity carries S itself. Norm profiles along the schedule
//! test continuity at infinity.

use crate::error::{Error, Result};
use crate::roe::{beta, multiplicativity_defect, FinitePropOperator, GridOperator, MultRow, StageData};

/// Finitely-supported family (a_t) of site operators with a_∞ = 0; the
/// support maximum declares where the tail vanishes.
#[derive(Clone, Debug)]
pub struct IdealFamily {
    terms: Vec<(usize, FinitePropOperator)>,
}

impl IdealFamily {
    /// Terms are (stage, operator) with 1-based stages, at most one per
    /// stage.
    pub fn new(mut terms: Vec<(usize, FinitePropOperator)>) -> Result<Self> {
        terms.sort_by_key(|(t, _)| *t);
        for pair in terms.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::InvalidArgument(format!(
                    "duplicate ideal term at stage {}",
                    pair[0].0
                )));
            }
        }
        if terms.first().is_some_and(|(t, _)| *t == 0) {
            return Err(Error::InvalidArgument("stages are 1-based".into()));
        }
        Ok(IdealFamily { terms })
    }

    pub fn terms(&self) -> &[(usize, FinitePropOperator)] {
        &self.terms
    }

    pub fn term(&self, t: usize) -> Option<&FinitePropOperator> {
        self.terms
            .iter()
            .find(|(s, _)| *s == t)
            .map(|(_, op)| op)
    }

    pub fn support_max(&self) -> usize {
        self.terms.last().map(|(t, _)| *t).unwrap_or(0)
    }
}

/// A section a = b_S + ideal over the schedule: π_t(a) = β^{D_t}(S) + a_t
/// for finite t and π_∞(a) = S.
#[derive(Clone, Debug)]
pub struct FieldSection {
    source: GridOperator,
    fibers: Vec<FinitePropOperator>,
    ideal_part: Option<IdealFamily>,
}

/// Evaluates β^{D_t}(S) at every stage.
pub fn section(s: &GridOperator, stages: &[StageData]) -> Result<FieldSection> {
    let fibers = stages
        .iter()
        .map(|stage| beta(stage.iso(), s))
        .collect::<Result<Vec<_>>>()?;
    Ok(FieldSection {
        source: s.clone(),
        fibers,
        ideal_part: None,
    })
}

impl FieldSection {
    /// Attaches a finitely-supported perturbation. Every term must live on
    /// the sites of its stage.
    pub fn with_ideal(mut self, fam: IdealFamily, stages: &[StageData]) -> Result<Self> {
        for (t, op) in fam.terms() {
            let stage = stages.get(t - 1).ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "ideal term at stage {t} outside the schedule of length {}",
                    stages.len()
                ))
            })?;
            if op.sites().len() != stage.delone().len() {
                return Err(Error::SiteMismatch {
                    expected: stage.delone().len(),
                    found: op.sites().len(),
                });
            }
        }
        self.ideal_part = Some(fam);
        Ok(self)
    }

    pub fn source(&self) -> &GridOperator {
        &self.source
    }

    pub fn fibers(&self) -> &[FinitePropOperator] {
        &self.fibers
    }

    pub fn ideal_part(&self) -> Option<&IdealFamily> {
        self.ideal_part.as_ref()
    }

    pub fn len(&self) -> usize {
        self.fibers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fibers.is_empty()
    }

    /// π_t(a) for a finite 1-based stage.
    pub fn pi(&self, t: usize) -> Result<FinitePropOperator> {
        let fiber = self.fibers.get(t - 1).ok_or_else(|| {
            Error::InvalidArgument(format!("no stage {t} in a schedule of length {}", self.len()))
        })?;
        match self.ideal_part.as_ref().and_then(|f| f.term(t)) {
            None => Ok(fiber.clone()),
            Some(a) => {
                FinitePropOperator::new(fiber.sites().clone(), fiber.matrix() + a.matrix())
            }
        }
    }

    /// ‖π_∞(a)‖ = ‖S‖ since the ideal part vanishes at infinity.
    pub fn limit_norm(&self) -> f64 {
        self.source.norm()
    }

    /// max_t (‖β^{D_t}(S)‖ − ‖S‖), ignoring the ideal part; β is a
    /// contraction so this should never exceed roundoff.
    pub fn contraction_defect(&self) -> f64 {
        let s_norm = self.source.norm();
        self.fibers
            .iter()
            .map(|f| f.norm() - s_norm)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct ProfileRow {
    pub t: usize,
    pub fiber_norm: f64,
    pub continuity_gap: f64,
}

#[derive(Clone, Debug)]
pub struct NormProfile {
    pub rows: Vec<ProfileRow>,
    /// ‖π_∞(a)‖.
    pub limit_norm: f64,
    pub support_max: Option<usize>,
    /// True when the section has no grid part, i.e. lives in the ideal.
    pub pure_ideal: bool,
}

impl NormProfile {
    pub fn final_gap(&self) -> f64 {
        self.rows
            .last()
            .map(|r| r.continuity_gap)
            .unwrap_or(self.limit_norm)
    }

    /// For ideal sections: every fiber beyond the declared support is zero.
    pub fn zero_beyond_support(&self, tol: f64) -> bool {
        let cut = self.support_max.unwrap_or(0);
        self.rows
            .iter()
            .filter(|r| r.t > cut)
            .all(|r| r.fiber_norm <= tol)
    }
}

/// Norm of every fiber together with its gap to the limit fiber.
pub fn norm_profile(sec: &FieldSection) -> Result<NormProfile> {
    let limit_norm = sec.limit_norm();
    let mut rows = Vec::with_capacity(sec.len());
    for t in 1..=sec.len() {
        let fiber_norm = sec.pi(t)?.norm();
        rows.push(ProfileRow {
            t,
            fiber_norm,
            continuity_gap: (fiber_norm - limit_norm).abs(),
        });
    }
    Ok(NormProfile {
        rows,
        limit_norm,
        support_max: sec.ideal_part.as_ref().map(|f| f.support_max()),
        pure_ideal: limit_norm <= 1e-15,
    })
}

#[derive(Clone, Debug)]
pub struct SectionPair {
    pub a: usize,
    pub b: usize,
    /// max over all fibers, the limit fiber included, of the norm gap.
    pub max_gap: f64,
    pub distinct: bool,
    /// First finite stage where the sections differ beyond tolerance.
    pub differ_at_stage: Option<usize>,
    pub differ_at_infinity: bool,
}

#[derive(Clone, Debug)]
pub struct FieldAxioms {
    pub pairs: Vec<SectionPair>,
    /// Product defect of the first two sources along the schedule.
    pub product_defect: Vec<MultRow>,
}

/// Faithfulness in the desk form (distinct sections differ at some fiber)
/// plus the product defect table for the leading pair of sources.
pub fn field_axioms_check(
    sections: &[FieldSection],
    stages: &[StageData],
) -> Result<FieldAxioms> {
    if sections.len() < 2 {
        return Err(Error::InvalidArgument(
            "faithfulness needs at least two sections".into(),
        ));
    }
    let n_stage = sections[0].len();
    if sections.iter().any(|s| s.len() != n_stage) {
        return Err(Error::InvalidArgument(
            "sections built over different schedules".into(),
        ));
    }
    let tol = 1e-9;
    let mut pairs = Vec::new();
    for a in 0..sections.len() {
        for b in a + 1..sections.len() {
            let mut max_gap = 0.0f64;
            let mut differ_at_stage = None;
            for t in 1..=n_stage {
                let pa = sections[a].pi(t)?;
                let pb = sections[b].pi(t)?;
                let gap = FinitePropOperator::new(
                    pa.sites().clone(),
                    pa.matrix() - pb.matrix(),
                )?
                .norm();
                if gap > tol && differ_at_stage.is_none() {
                    differ_at_stage = Some(t);
                }
                max_gap = max_gap.max(gap);
            }
            let inf_gap = GridOperator::new(
                *sections[a].source.space(),
                sections[a].source.matrix() - sections[b].source.matrix(),
            )?
            .norm();
            max_gap = max_gap.max(inf_gap);
            pairs.push(SectionPair {
                a,
                b,
                max_gap,
                distinct: max_gap > tol,
                differ_at_stage,
                differ_at_infinity: inf_gap > tol,
            });
        }
    }
    let product_defect =
        multiplicativity_defect(stages, sections[0].source(), sections[1].source())?;
    Ok(FieldAxioms {
        pairs,
        product_defect,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cells::voronoi_cells;
    use crate::delone::greedy_delone;
    use crate::roe::{adapted_basis, build_stages, random_banded, random_banded_grid};
    use crate::space::{GridFunction, TorusSpace};
    use ndarray::Array2;

    fn schedule(grid_n: usize, targets: &[f64]) -> (TorusSpace, Vec<StageData>) {
        let sp = TorusSpace::new(1, 1.0, grid_n).unwrap();
        let seed = sp.point(&[0.125]).unwrap();
        (sp, build_stages(&sp, targets, seed).unwrap())
    }

    #[test]
    fn zero_source_gives_zero_fibers() {
        let (sp, stages) = schedule(128, &[0.5, 0.25, 0.125]);
        let zero = GridOperator::new(sp, Array2::zeros((128, 128))).unwrap();
        let sec = section(&zero, &stages).unwrap();
        for f in sec.fibers() {
            assert_eq!(f.norm(), 0.0);
        }
        let profile = norm_profile(&sec).unwrap();
        assert!(profile.pure_ideal);
        assert_eq!(profile.final_gap(), 0.0);
    }

    #[test]
    fn identity_section_has_constant_profile() {
        let (sp, stages) = schedule(128, &[0.5, 0.25, 0.125]);
        let sec = section(&GridOperator::identity(sp), &stages).unwrap();
        for (f, stage) in sec.fibers().iter().zip(&stages) {
            let k = stage.delone().len();
            let mut dev = 0.0f64;
            for u in 0..k {
                for v in 0..k {
                    let target = if u == v { 1.0 } else { 0.0 };
                    dev = dev.max((f.matrix()[[u, v]] - target).abs());
                }
            }
            assert!(dev <= 1e-10);
        }
        let profile = norm_profile(&sec).unwrap();
        for row in &profile.rows {
            assert!((row.fiber_norm - 1.0).abs() <= 1e-9);
            assert!(row.continuity_gap <= 1e-9);
        }
    }

    #[test]
    fn multiplication_section_norms_rise_to_limit() {
        let (sp, stages) = schedule(256, &[0.5, 0.25, 0.125, 0.0625, 0.03125]);
        let f = GridFunction::from_fn(sp, |p| (2.0 * std::f64::consts::PI * p.coords()[0]).cos());
        let sec = section(&GridOperator::multiplication(&f), &stages).unwrap();

        assert!(sec.contraction_defect() <= 1e-9);
        let profile = norm_profile(&sec).unwrap();
        assert!((profile.limit_norm - 1.0).abs() <= 1e-12);
        assert!(profile.rows.last().unwrap().fiber_norm > profile.rows[0].fiber_norm);
        assert!(profile.final_gap() < 0.05, "gap {}", profile.final_gap());
    }

    #[test]
    fn ideal_family_profile_vanishes_beyond_support() {
        let (sp, stages) = schedule(128, &[0.5, 0.25, 0.125, 0.0625]);
        let zero = GridOperator::new(sp, Array2::zeros((128, 128))).unwrap();
        let a1 = random_banded(stages[0].delone(), 0.5, 60).unwrap();
        let a2 = random_banded(stages[1].delone(), 0.5, 61).unwrap();
        let fam = IdealFamily::new(vec![(2, a2.clone()), (1, a1.clone())]).unwrap();
        assert_eq!(fam.support_max(), 2);

        let sec = section(&zero, &stages)
            .unwrap()
            .with_ideal(fam, &stages)
            .unwrap();
        let profile = norm_profile(&sec).unwrap();
        assert!(profile.pure_ideal);
        assert!((profile.rows[0].fiber_norm - a1.norm()).abs() <= 1e-12);
        assert!((profile.rows[1].fiber_norm - a2.norm()).abs() <= 1e-12);
        assert_eq!(profile.rows[2].fiber_norm, 0.0);
        assert_eq!(profile.rows[3].fiber_norm, 0.0);
        assert!(profile.zero_beyond_support(1e-15));
        assert_eq!(profile.rows[2].continuity_gap, 0.0);
    }

    #[test]
    fn ideal_terms_are_validated() {
        let (sp, stages) = schedule(128, &[0.5, 0.25]);
        let zero = GridOperator::new(sp, Array2::zeros((128, 128))).unwrap();
        let sec = section(&zero, &stages).unwrap();

        let wrong_sites = random_banded(stages[1].delone(), 0.5, 62).unwrap();
        let fam = IdealFamily::new(vec![(1, wrong_sites)]).unwrap();
        assert!(matches!(
            sec.clone().with_ideal(fam, &stages),
            Err(Error::SiteMismatch { .. })
        ));

        let a = random_banded(stages[0].delone(), 0.5, 63).unwrap();
        assert!(IdealFamily::new(vec![(0, a.clone())]).is_err());
        assert!(IdealFamily::new(vec![(1, a.clone()), (1, a.clone())]).is_err());
        let beyond = IdealFamily::new(vec![(7, a)]).unwrap();
        assert!(sec.with_ideal(beyond, &stages).is_err());
    }

    #[test]
    fn perturbation_moves_one_fiber_only() {
        let (sp, stages) = schedule(256, &[0.5, 0.25, 0.125, 0.0625]);
        let f = GridFunction::from_fn(sp, |p| (2.0 * std::f64::consts::PI * p.coords()[0]).cos());
        let op = GridOperator::multiplication(&f);
        let pure = section(&op, &stages).unwrap();
        let bump = random_banded(stages[0].delone(), 0.5, 64).unwrap();
        let fam = IdealFamily::new(vec![(1, bump)]).unwrap();
        let perturbed = section(&op, &stages)
            .unwrap()
            .with_ideal(fam, &stages)
            .unwrap();

        let p0 = norm_profile(&pure).unwrap();
        let p1 = norm_profile(&perturbed).unwrap();
        assert!((p0.rows[0].fiber_norm - p1.rows[0].fiber_norm).abs() > 1e-6);
        for t in 1..p0.rows.len() {
            assert_eq!(p0.rows[t].fiber_norm, p1.rows[t].fiber_norm);
        }
        assert!(p1.final_gap() < 0.05 * p1.limit_norm);
    }

    #[test]
    fn axioms_separate_distinct_sections() {
        let sp = TorusSpace::new(1, 1.0, 256).unwrap();
        let seed = sp.point(&[0.125]).unwrap();
        let stages = build_stages(&sp, &[0.5, 0.25, 0.125, 0.0625], seed).unwrap();
        let coarse = greedy_delone(&sp, 0.25, seed).unwrap();
        let c = voronoi_cells(&sp, &coarse);
        let last = stages.last().unwrap();
        let prep = adapted_basis(last.pou(), &c, last.gram(), 2).unwrap();

        let r_op = prep
            .compress(&random_banded_grid(&sp, 0.1, 70).unwrap())
            .unwrap()
            .normalized();
        let s_op = prep
            .compress(&random_banded_grid(&sp, 0.1, 71).unwrap())
            .unwrap()
            .normalized();

        let sections = vec![
            section(&r_op, &stages).unwrap(),
            section(&s_op, &stages).unwrap(),
            section(&r_op, &stages).unwrap(),
        ];
        let report = field_axioms_check(&sections, &stages).unwrap();

        let pair01 = report.pairs.iter().find(|p| p.a == 0 && p.b == 1).unwrap();
        assert!(pair01.distinct);
        let pair02 = report.pairs.iter().find(|p| p.a == 0 && p.b == 2).unwrap();
        assert!(!pair02.distinct);
        assert!(pair02.max_gap <= 1e-12);
        assert!(report.product_defect.last().unwrap().defect <= 1e-10);

        assert!(field_axioms_check(&sections[..1], &stages).is_err());
    }

    #[test]
    fn axioms_flag_ideal_perturbation_fiber() {
        let (sp, stages) = schedule(128, &[0.5, 0.25, 0.125]);
        let f = GridFunction::from_fn(sp, |p| (2.0 * std::f64::consts::PI * p.coords()[0]).cos());
        let op = GridOperator::multiplication(&f);
        let base = section(&op, &stages).unwrap();
        let bump = random_banded(stages[1].delone(), 0.5, 72).unwrap();
        let fam = IdealFamily::new(vec![(2, bump)]).unwrap();
        let shifted = section(&op, &stages)
            .unwrap()
            .with_ideal(fam, &stages)
            .unwrap();

        let report = field_axioms_check(&[base, shifted], &stages).unwrap();
        let pair = &report.pairs[0];
        assert!(pair.distinct);
        assert_eq!(pair.differ_at_stage, Some(2));
        assert!(!pair.differ_at_infinity);
    }
}
