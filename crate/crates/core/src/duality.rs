//! The completely positive map built from a certificate, the certified
//! localization bound, kernel extraction and the amplification check.
//!
//! For a vector certificate `xi` of radius at most `S`,
//! `phi(b)_{y,z} = sum_{(x,i)} xi_y(x,i) conj(xi_z(x,i)) b^{(x)}_{y,z}`.
//! On `b = psi_S(a)` every block that holds `(y, z)` holds `a_{y,z}`, so
//! `phi psi_S(a)` is the Schur product of `a` with the Gram kernel.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use num_rational::Ratio;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::certificates::{
    self, ball_indicator_certificate, check_positive_definite, indicator_gram, kernel_deviation, tree_ray_certificate,
    vector_to_kernel, KernelCertificate, PsdCheck, VectorCertificate, VectorForm,
};
use crate::error::{Error, Result};
use crate::linalg::C64;
use crate::localization::{compress_with, BlockCompression, onl_profile, vector_amplification_reduction, OnlProfile, OnlProfileConfig};
use crate::operators::{self, BandedOperator, Block, Field};
use crate::space::{BallCover, FiniteMetricSpace};

/// Absolute slack in the certified inequalities.
pub const BOUND_SLACK: f64 = 1e-9;
/// Slack in the amplified-versus-scalar comparison.
pub const CB_SLACK: f64 = 1e-6;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

fn same_space(a: &Arc<FiniteMetricSpace>, b: &Arc<FiniteMetricSpace>) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

#[derive(Clone, Debug, PartialEq)]
pub struct SchurCPMap {
    cert: VectorCertificate,
    s: f64,
}

impl SchurCPMap {
    pub fn new(cert: VectorCertificate, s: f64) -> Result<Self> {
        if cert.radius() > s {
            return Err(Error::RadiusMismatch { expected: s, found: cert.radius() });
        }
        Ok(Self { cert, s })
    }

    pub fn radius(&self) -> f64 {
        self.s
    }

    pub fn certificate(&self) -> &VectorCertificate {
        &self.cert
    }

    pub fn provenance(&self) -> &str {
        self.cert.provenance()
    }

    pub fn gram_kernel(&self) -> KernelCertificate {
        vector_to_kernel(&self.cert)
    }

    fn check(&self, b: &BlockCompression) -> Result<()> {
        if b.radius() != self.s {
            return Err(Error::RadiusMismatch { expected: self.s, found: b.radius() });
        }
        if !same_space(b.space(), self.cert.space()) {
            return Err(Error::SpaceMismatch);
        }
        Ok(())
    }

    pub fn apply(&self, b: &BlockCompression) -> Result<BandedOperator> {
        self.check(b)?;
        let n = b.space().len();
        let pairs: BTreeSet<(usize, usize)> = (0..n).flat_map(|x| b.block_entries(x).keys().copied()).collect();
        let entries: Vec<((usize, usize), Block)> = pairs
            .into_iter()
            .filter_map(|(y, z)| self.entry_unchecked(b, y, z).map(|v| ((y, z), v)))
            .collect();
        BandedOperator::from_entries(b.space().clone(), b.multiplicity(), entries)
    }

    /// `phi(b)_{y,z}`; `None` when no term contributes.
    pub fn apply_entry(&self, b: &BlockCompression, y: usize, z: usize) -> Result<Option<Block>> {
        self.check(b)?;
        b.space().check_point(y)?;
        b.space().check_point(z)?;
        Ok(self.entry_unchecked(b, y, z))
    }

    fn entry_unchecked(&self, b: &BlockCompression, y: usize, z: usize) -> Option<Block> {
        // Terms are grouped by the exact value of b^{(x)}_{y,z}; weights in a
        // group accumulate in coordinate order, as in the Gram computation.
        let mut groups: Vec<(&Block, C64, usize)> = Vec::new();
        match self.cert.form() {
            VectorForm::Indicator(sets) => {
                let (a, c) = (&sets[y], &sets[z]);
                let (mut i, mut j) = (0, 0);
                while i < a.len() && j < c.len() {
                    match a[i].cmp(&c[j]) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            if let Some(block) = b.entry(a[i].0, y, z) {
                                add_term(&mut groups, block, ZERO);
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                }
                let (ny, nz) = (a.len(), c.len());
                let mut out: Option<Block> = None;
                for (block, _, count) in groups {
                    let w = C64::new(indicator_gram(count, ny, nz), 0.0);
                    let term = block * w;
                    out = Some(match out {
                        Some(acc) => acc + term,
                        None => term,
                    });
                }
                out
            }
            VectorForm::General(vs) => {
                let (a, c) = (&vs[y], &vs[z]);
                let (mut i, mut j) = (0, 0);
                while i < a.len() && j < c.len() {
                    match a[i].0.cmp(&c[j].0) {
                        std::cmp::Ordering::Less => i += 1,
                        std::cmp::Ordering::Greater => j += 1,
                        std::cmp::Ordering::Equal => {
                            if let Some(block) = b.entry(a[i].0 .0, y, z) {
                                add_term(&mut groups, block, a[i].1 * c[j].1.conj());
                            }
                            i += 1;
                            j += 1;
                        }
                    }
                }
                let scale = if y == z {
                    self.cert.raw_norm_sqr(y)
                } else {
                    (self.cert.raw_norm_sqr(y) * self.cert.raw_norm_sqr(z)).sqrt()
                };
                let mut out: Option<Block> = None;
                for (block, acc, _) in groups {
                    let w = if y == z { C64::new(acc.re / scale, 0.0) } else { acc / scale };
                    let term = block * w;
                    out = Some(match out {
                        Some(sum) => sum + term,
                        None => term,
                    });
                }
                out
            }
        }
    }
}

fn add_term<'a>(groups: &mut Vec<(&'a Block, C64, usize)>, block: &'a Block, term: C64) {
    match groups.iter_mut().find(|(v, _, _)| *v == block) {
        Some((_, acc, count)) => {
            *acc += term;
            *count += 1;
        }
        None => groups.push((block, term, 1)),
    }
}

pub fn phi_apply(phi: &SchurCPMap, b: &BlockCompression) -> Result<BandedOperator> {
    phi.apply(b)
}

/// Entrywise product `[k(y, z) a_{y,z}]`.
pub fn schur_multiply(a: &BandedOperator, k: &KernelCertificate) -> Result<BandedOperator> {
    if k.len() != a.space().len() {
        return Err(Error::SpaceMismatch);
    }
    let entries: Vec<_> = a.entries().iter().map(|(&(y, z), b)| ((y, z), b * k.get(y, z))).collect();
    BandedOperator::from_entries(a.space().clone(), a.multiplicity(), entries)
}

/// `max_x |N(x, R)|`: no row or column of an operator in `E_R` has more nonzero entries.
pub fn schur_test_kappa(space: &FiniteMetricSpace, r: f64) -> usize {
    space.geometry_profile(r).max_ball
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBound {
    pub r: f64,
    pub kappa: usize,
    pub gram_deficit: f64,
    #[serde(with = "ratio_text")]
    pub gram_deficit_exact: Option<Ratio<u64>>,
    /// `kappa * gram_deficit`.
    pub value: f64,
    #[serde(with = "ratio_text")]
    pub exact: Option<Ratio<u64>>,
    /// `true` when `value >= 1`, so `1 - value` bounds nothing.
    pub vacuous: bool,
}

impl EpsilonBound {
    pub fn lower_bound(&self) -> f64 {
        (1.0 - self.value).max(0.0)
    }
}

fn ratio_to_f64(r: Ratio<u64>) -> f64 {
    *r.numer() as f64 / *r.denom() as f64
}

/// `epsilon = kappa(R) max_{d(y,z) <= R} |1 - <xi_y, xi_z>|`.
pub fn certified_epsilon(cert: &VectorCertificate, r: f64) -> EpsilonBound {
    let kappa = schur_test_kappa(cert.space(), r);
    let (deficit, deficit_exact) = cert.gram_deficit(r);
    let exact = deficit_exact.map(|d| d * Ratio::from_integer(kappa as u64));
    let value = match exact {
        Some(e) => ratio_to_f64(e),
        None => kappa as f64 * deficit,
    };
    EpsilonBound {
        r,
        kappa,
        gram_deficit: deficit_exact.map(ratio_to_f64).unwrap_or(deficit),
        gram_deficit_exact: deficit_exact,
        value,
        exact,
        vacuous: value >= 1.0,
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleCheck {
    pub norm: f64,
    /// `||psi_S(a)||`.
    pub compressed_norm: f64,
    /// `||a - phi psi_S(a)||`.
    pub defect_norm: f64,
    pub defect_holds: bool,
    pub lower_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OnlBoundCheck {
    pub epsilon: EpsilonBound,
    pub s: f64,
    pub samples: usize,
    /// Largest `||a - phi psi_S(a)|| / ||a||`.
    pub max_defect_ratio: f64,
    /// Smallest `||psi_S(a)|| / ||a||`.
    pub min_compressed_ratio: f64,
    pub violations: usize,
    pub verified: bool,
    pub checks: Vec<SampleCheck>,
}

fn check_sample(phi: &SchurCPMap, cover: &Arc<BallCover>, eps: f64, a: &BandedOperator) -> Result<SampleCheck> {
    let norm = a.operator_norm()?;
    let compressed = compress_with(a, cover);
    let compressed_norm = compressed.block_norm();
    let defect_norm = a.sub(&phi.apply(&compressed)?)?.operator_norm()?;
    Ok(SampleCheck {
        norm,
        compressed_norm,
        defect_norm,
        defect_holds: defect_norm <= eps * norm + BOUND_SLACK,
        lower_holds: (1.0 - eps) * norm <= compressed_norm + BOUND_SLACK,
    })
}

/// Checks `||a - phi psi_S(a)|| <= epsilon ||a||` and
/// `(1 - epsilon) ||a|| <= ||psi_S(a)||` for each sample, with `S` the
/// certificate radius.
pub fn a_implies_onl_bound(cert: &VectorCertificate, r: f64, samples: &[BandedOperator]) -> Result<OnlBoundCheck> {
    a_implies_onl_bound_at(cert, cert.radius(), r, samples)
}

/// As [`a_implies_onl_bound`] with balls of radius `s >= cert.radius()`.
pub fn a_implies_onl_bound_at(cert: &VectorCertificate, s: f64, r: f64, samples: &[BandedOperator]) -> Result<OnlBoundCheck> {
    let phi = SchurCPMap::new(cert.clone(), s)?;
    let epsilon = certified_epsilon(cert, r);
    let cover = Arc::new(cert.space().ball_cover(s));
    for a in samples {
        if !same_space(a.space(), cert.space()) {
            return Err(Error::SpaceMismatch);
        }
        if a.propagation() > r {
            return Err(Error::InvalidOperator(format!("sample has propagation {} > R = {r}", a.propagation())));
        }
    }
    let checks = samples
        .par_iter()
        .filter(|a| !a.is_zero())
        .map(|a| check_sample(&phi, &cover, epsilon.value, a))
        .collect::<Result<Vec<_>>>()?;
    let violations = checks.iter().filter(|c| !(c.defect_holds && c.lower_holds)).count();
    Ok(OnlBoundCheck {
        s,
        samples: checks.len(),
        max_defect_ratio: checks.iter().map(|c| c.defect_norm / c.norm).fold(0.0, f64::max),
        min_compressed_ratio: checks.iter().map(|c| c.compressed_norm / c.norm).fold(f64::INFINITY, f64::min),
        violations,
        verified: violations == 0,
        epsilon,
        checks,
    })
}

/// `k(y, z) = <phi psi_S(e_{y,z}) delta_z, delta_y>` for all pairs.
pub fn kernel_from_cp_map(phi: &SchurCPMap, s: f64) -> Result<KernelCertificate> {
    if s != phi.s {
        return Err(Error::RadiusMismatch { expected: phi.s, found: s });
    }
    let space = phi.cert.space().clone();
    let n = space.len();
    let cover = Arc::new(space.ball_cover(s));
    let rows: Vec<Vec<((usize, usize), C64)>> = (0..n)
        .into_par_iter()
        .map(|y| {
            let mut row = Vec::new();
            for z in 0..n {
                let e = BandedOperator::matrix_unit(space.clone(), y, z)?;
                let compressed = compress_with(&e, &cover);
                if compressed.is_zero() {
                    continue;
                }
                let image = phi.apply(&compressed)?;
                if let Some(v) = image.get(y, z) {
                    row.push(((y, z), v[(0, 0)]));
                }
            }
            Ok(row)
        })
        .collect::<Result<_>>()?;
    let values: BTreeMap<_, _> = rows.into_iter().flatten().collect();
    KernelCertificate::new(&space, 2.0 * s, values)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReductionRecord {
    pub input_norm: f64,
    pub compressed_norm: f64,
    pub fraction: f64,
    /// `||a|| / ||psi_S(a)||` for the amplified input.
    pub input_ratio: f64,
    /// The same ratio for `W^* a V`.
    pub reduced_ratio: f64,
    pub propagation_preserved: bool,
    pub bound_holds: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CbNormReport {
    pub r: f64,
    pub s: f64,
    pub amplification: usize,
    pub epsilon: f64,
    pub scalar_samples: usize,
    pub amplified_samples: usize,
    /// Largest `||a|| / ||psi_S(a)||` over the scalar samples alone.
    pub rho_scalar_sampled: f64,
    /// The scalar estimate including every reduced operator.
    pub rho_1: f64,
    pub rho_n: f64,
    pub reductions: Vec<ReductionRecord>,
    pub holds: bool,
}

fn inverse_ratio(a: &BandedOperator, cover: &Arc<BallCover>) -> Result<f64> {
    let compressed = compress_with(a, cover).block_norm();
    Ok(if compressed == 0.0 { f64::INFINITY } else { a.operator_norm()? / compressed })
}

/// Samples `E_R` at multiplicities 1 and `amplification` and checks that
/// the amplified estimate of `||(psi_S|E_R)^{-1}||` does not exceed the
/// scalar one, after adding each amplified sample's reduction `W^* a V` to
/// the scalar set.
pub fn sampled_cb_norm_check(
    space: &Arc<FiniteMetricSpace>,
    r: f64,
    s: f64,
    amplification: usize,
    samples: usize,
    seed: u64,
) -> Result<CbNormReport> {
    if !(r > 0.0 && r < s) {
        return Err(Error::InvalidRadii { r, s, reason: "0 < R < S is required" });
    }
    if amplification == 0 || samples == 0 {
        return Err(Error::InvalidParams("amplification and sample count must be positive".into()));
    }
    let seeds = operators::derive_seeds(seed, 2);
    let scalar = operators::sample_band(space, r, samples, seeds[0], 1, Field::Complex);
    let amplified = operators::sample_band(space, r, samples, seeds[1], amplification, Field::Complex);
    cb_norm_check_on(&scalar, &amplified, r, s, 0.1)
}

/// The check of [`sampled_cb_norm_check`] on explicit sample sets.
pub fn cb_norm_check_on(
    scalar: &[BandedOperator],
    amplified: &[BandedOperator],
    r: f64,
    s: f64,
    epsilon: f64,
) -> Result<CbNormReport> {
    let Some(first) = scalar.first().or(amplified.first()) else {
        return Err(Error::InvalidParams("no samples".into()));
    };
    let cover = Arc::new(first.space().ball_cover(s));
    let scalar_ratios = scalar.par_iter().map(|a| inverse_ratio(a, &cover)).collect::<Result<Vec<_>>>()?;
    let records = amplified
        .par_iter()
        .map(|a| {
            let input_ratio = inverse_ratio(a, &cover)?;
            let red = vector_amplification_reduction(a, epsilon)?;
            let reduced_ratio = inverse_ratio(red.operator(), &cover)?;
            Ok(ReductionRecord {
                input_norm: red.input_norm,
                compressed_norm: red.compressed_norm,
                fraction: red.fraction,
                input_ratio,
                reduced_ratio,
                propagation_preserved: red.operator().propagation() <= a.propagation(),
                bound_holds: red.bound_holds,
            })
        })
        .collect::<Result<Vec<ReductionRecord>>>()?;
    let rho_scalar_sampled = scalar_ratios.iter().copied().fold(0.0, f64::max);
    let rho_1 = records.iter().map(|r| r.reduced_ratio).fold(rho_scalar_sampled, f64::max);
    let rho_n = records.iter().map(|r| r.input_ratio).fold(0.0, f64::max);
    let holds = rho_n <= rho_1 + CB_SLACK && records.iter().all(|r| r.bound_holds && r.propagation_preserved);
    Ok(CbNormReport {
        r,
        s,
        amplification: amplified.first().map(|a| a.multiplicity()).unwrap_or(1),
        epsilon,
        scalar_samples: scalar.len(),
        amplified_samples: amplified.len(),
        rho_scalar_sampled,
        rho_1,
        rho_n,
        reductions: records,
        holds,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub enum CertificateSource {
    BallIndicator,
    TreeRay { root: usize, length: usize },
    Supplied(VectorCertificate),
}

#[derive(Clone, Debug)]
pub struct EquivalenceConfig {
    pub r: f64,
    pub s: f64,
    pub source: CertificateSource,
    pub samples: usize,
    pub seed: u64,
    pub search_budget: usize,
    pub psd_tolerance: Option<f64>,
}

impl EquivalenceConfig {
    pub fn new(r: f64, s: f64, source: CertificateSource, samples: usize, seed: u64) -> Self {
        Self { r, s, source, samples, seed, search_budget: 200, psd_tolerance: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceSection {
    pub n: usize,
    pub diameter: f64,
    pub max_ball_r: usize,
    pub max_ball_s: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametersSection {
    pub r: f64,
    pub s: f64,
    pub samples: usize,
    pub seed: u64,
    pub search_budget: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateSection {
    pub provenance: String,
    pub radius: f64,
    pub multiplicity: usize,
    pub vector_deviation: f64,
    pub gram_deficit: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundChecksSection {
    pub samples: usize,
    pub max_defect_ratio: f64,
    pub min_compressed_ratio: f64,
    pub violations: usize,
    /// Adjacency operator of a graph metric, when `R >= 1`.
    pub adjacency: Option<SampleCheck>,
    pub verified: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelChecks {
    pub unit_diagonal: bool,
    pub hermitian: bool,
    pub psd: PsdCheck,
    /// `k(y, z) = 0` wherever no radius-S ball holds both points.
    pub zeros_respected: bool,
    /// Extracted kernel equals the Gram kernel entry for entry.
    pub matches_gram: bool,
    pub propagation_bound: f64,
    pub support_radius: f64,
    pub deviation: f64,
    pub deviation_matches_gram: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub space: SpaceSection,
    pub parameters: ParametersSection,
    pub certificate: CertificateSection,
    pub epsilon: EpsilonBound,
    pub certified_bound_checks: BoundChecksSection,
    pub kernel_checks: KernelChecks,
    pub onl_profile: Option<OnlProfile>,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
    pub verified: bool,
}

impl EquivalenceReport {
    pub const CSV_HEADER: [&'static str; 17] = [
        "space",
        "n",
        "R",
        "S",
        "certificate",
        "kappa",
        "gram_deficit",
        "epsilon",
        "vacuous",
        "samples",
        "max_defect_ratio",
        "min_compressed_ratio",
        "kernel_min_eigenvalue",
        "kernel_deviation",
        "kernel_support_radius",
        "adversarial_upper",
        "verified",
    ];

    pub fn csv_record(&self, space_id: &str) -> Vec<String> {
        vec![
            space_id.to_string(),
            self.space.n.to_string(),
            self.parameters.r.to_string(),
            self.parameters.s.to_string(),
            self.certificate.provenance.clone(),
            self.epsilon.kappa.to_string(),
            self.epsilon.gram_deficit.to_string(),
            self.epsilon.value.to_string(),
            self.epsilon.vacuous.to_string(),
            self.certified_bound_checks.samples.to_string(),
            self.certified_bound_checks.max_defect_ratio.to_string(),
            self.certified_bound_checks.min_compressed_ratio.to_string(),
            self.kernel_checks.psd.min_eigenvalue.to_string(),
            self.kernel_checks.deviation.to_string(),
            self.kernel_checks.support_radius.to_string(),
            self.onl_profile.as_ref().map(|p| p.adversarial_upper.to_string()).unwrap_or_default(),
            self.verified.to_string(),
        ]
    }
}

const NOTE_CONSTRUCTIVE: &str = "phi is built from an explicit certificate; the CP perturbation step from an abstract \
     localization bound is not synthesized, so kernel extraction is exercised on this phi";

/// Certificate, certified bound, CP map, extracted kernel and localization
/// profile for one `(R, S)`.
pub fn equivalence_experiment(space: &Arc<FiniteMetricSpace>, config: &EquivalenceConfig) -> Result<EquivalenceReport> {
    let (r, s) = (config.r, config.s);
    if !(r >= 0.0 && s >= 0.0) {
        return Err(Error::InvalidRadii { r, s, reason: "radii must be nonnegative" });
    }
    let cert = match &config.source {
        CertificateSource::BallIndicator => ball_indicator_certificate(space, s)?,
        CertificateSource::TreeRay { root, length } => tree_ray_certificate(space, *root, *length)?,
        CertificateSource::Supplied(c) => {
            if !same_space(c.space(), space) {
                return Err(Error::SpaceMismatch);
            }
            c.clone()
        }
    };
    if cert.radius() > s {
        return Err(Error::InvalidCertificate(format!("certificate radius {} exceeds S = {s}", cert.radius())));
    }
    let mut warnings = Vec::new();
    let samples = operators::sample_band(space, r, config.samples, config.seed, 1, Field::Complex);
    let bound = a_implies_onl_bound_at(&cert, s, r, &samples)?;
    if bound.epsilon.vacuous {
        warnings.push(format!("epsilon = {} >= 1: the certified lower bound is vacuous", bound.epsilon.value));
    }

    let phi = SchurCPMap::new(cert.clone(), s)?;
    let adjacency = if r >= 1.0 && !space.unit_pairs().is_empty() {
        let cover = Arc::new(space.ball_cover(s));
        Some(check_sample(&phi, &cover, bound.epsilon.value, &BandedOperator::adjacency(space.clone()))?)
    } else {
        None
    };

    let kernel = kernel_from_cp_map(&phi, s)?;
    let gram = phi.gram_kernel();
    let cover = space.ball_cover(s);
    let n = space.len();
    let zeros_respected = (0..n).all(|y| {
        (0..n).all(|z| kernel.get(y, z) == ZERO || cover.ball(y).iter().any(|&x| cover.contains(x, z)))
    });
    let psd = check_positive_definite(&kernel.to_dense(), config.psd_tolerance)?;
    let deviation = kernel_deviation(&kernel, space, r);
    let kernel_checks = KernelChecks {
        unit_diagonal: kernel.unit_diagonal(),
        hermitian: kernel.is_hermitian(),
        zeros_respected,
        matches_gram: kernel.values() == gram.values(),
        propagation_bound: kernel.propagation_bound(),
        support_radius: kernel.support_radius(),
        deviation,
        deviation_matches_gram: deviation == cert.gram_deficit(r).0,
        psd,
    };

    let onl = if r > 0.0 && s >= r && config.samples > 0 {
        let mut profile_config = OnlProfileConfig::new(r, s, config.samples, config.seed);
        profile_config.search_budget = config.search_budget;
        Some(onl_profile(space, &profile_config, Some(&cert))?)
    } else {
        warnings.push("localization profile skipped: it needs 0 < R <= S".into());
        None
    };

    let profile_ok = onl.as_ref().is_none_or(|p| p.bounds_ordered);
    let adjacency_ok = adjacency.as_ref().is_none_or(|c| c.defect_holds && c.lower_holds);
    let verified = bound.verified
        && adjacency_ok
        && profile_ok
        && kernel_checks.unit_diagonal
        && kernel_checks.hermitian
        && kernel_checks.psd.is_psd
        && kernel_checks.zeros_respected
        && kernel_checks.deviation_matches_gram;

    Ok(EquivalenceReport {
        space: SpaceSection {
            n,
            diameter: space.diameter(),
            max_ball_r: schur_test_kappa(space, r),
            max_ball_s: schur_test_kappa(space, s),
        },
        parameters: ParametersSection { r, s, samples: config.samples, seed: config.seed, search_budget: config.search_budget },
        certificate: CertificateSection {
            provenance: cert.provenance().to_string(),
            radius: cert.radius(),
            multiplicity: cert.multiplicity(),
            vector_deviation: certificates::vector_deviation(&cert, r),
            gram_deficit: bound.epsilon.gram_deficit,
        },
        epsilon: bound.epsilon.clone(),
        certified_bound_checks: BoundChecksSection {
            samples: bound.samples,
            max_defect_ratio: if bound.samples == 0 { 0.0 } else { bound.max_defect_ratio },
            min_compressed_ratio: if bound.samples == 0 { 1.0 } else { bound.min_compressed_ratio },
            violations: bound.violations,
            adjacency,
            verified: bound.verified && adjacency_ok,
        },
        kernel_checks,
        onl_profile: onl,
        warnings,
        notes: vec![
            NOTE_CONSTRUCTIVE.into(),
            format!("kernel support radius measured as {}, bounded by 2S = {}", kernel.support_radius(), 2.0 * s),
        ],
        verified,
    })
}

mod ratio_text {
    use num_rational::Ratio;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Option<Ratio<u64>>, s: S) -> Result<S::Ok, S::Error> {
        match r {
            Some(r) => s.serialize_some(&format!("{}/{}", r.numer(), r.denom())),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Ratio<u64>>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let (n, m) = text.split_once('/').ok_or_else(|| serde::de::Error::custom("expected p/q"))?;
        let parse = |t: &str| t.trim().parse::<u64>().map_err(serde::de::Error::custom);
        let denom = parse(m)?;
        if denom == 0 {
            return Err(serde::de::Error::custom("zero denominator"));
        }
        Ok(Some(Ratio::new(parse(n)?, denom)))
    }
}
