//! Referral and professional network construction plus the exploratory
//! statistics computed on the raw consultation stream.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Network, Role};
use crate::ingest::{ConsultationRecord, PhysicianProfile, PhysicianTable};

/// A PC consultation followed by an SC consultation for the same patient.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ReferralInteraction {
    pub pc_id: String,
    pub sc_id: String,
    pub patient_id: String,
    pub pc_date: NaiveDate,
    pub sc_date: NaiveDate,
    pub gap_days: u32,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairingRule {
    /// PC immediately followed by an SC in the patient's known-role sequence.
    #[default]
    Consecutive,
    /// Every PC visit paired with the next SC visit after it, even when other
    /// PC visits intervene.
    AnyPcToNextSc,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractConfig {
    /// `None` means unbounded.
    pub max_gap_days: Option<u32>,
    pub rule: PairingRule,
}

impl Default for ExtractConfig {
    fn default() -> Self {
        ExtractConfig {
            max_gap_days: Some(30),
            rule: PairingRule::Consecutive,
        }
    }
}

/// Scans each patient's chronological known-role consultations.
///
/// Same-day visits order PC before SC, then by physician id.
/// `consultations` must be grouped by patient (the ingest sort order).
pub fn extract_interactions(
    consultations: &[ConsultationRecord],
    profiles: &PhysicianTable,
    cfg: ExtractConfig,
) -> Vec<ReferralInteraction> {
    let groups: Vec<&[ConsultationRecord]> = consultations
        .chunk_by(|a, b| a.patient_id == b.patient_id)
        .collect();
    groups
        .par_iter()
        .flat_map_iter(|visits| patient_interactions(visits, profiles, cfg))
        .collect()
}

fn patient_interactions(
    visits: &[ConsultationRecord],
    profiles: &PhysicianTable,
    cfg: ExtractConfig,
) -> Vec<ReferralInteraction> {
    let mut seq: Vec<(NaiveDate, Role, &str)> = visits
        .iter()
        .filter_map(|v| match profiles.role_of(&v.physician_id) {
            Role::Unknown => None,
            role => Some((v.date, role, v.physician_id.as_str())),
        })
        .collect();
    seq.sort();
    let within = |gap: i64| gap >= 0 && cfg.max_gap_days.is_none_or(|m| gap <= i64::from(m));
    let emit = |pc: &(NaiveDate, Role, &str), sc: &(NaiveDate, Role, &str)| {
        let gap = (sc.0 - pc.0).num_days();
        within(gap).then(|| ReferralInteraction {
            pc_id: pc.2.to_string(),
            sc_id: sc.2.to_string(),
            patient_id: visits[0].patient_id.clone(),
            pc_date: pc.0,
            sc_date: sc.0,
            gap_days: gap as u32,
        })
    };
    let mut out = Vec::new();
    match cfg.rule {
        PairingRule::Consecutive => {
            for w in seq.windows(2) {
                if w[0].1 == Role::Pc && w[1].1 == Role::Sc {
                    out.extend(emit(&w[0], &w[1]));
                }
            }
        }
        PairingRule::AnyPcToNextSc => {
            for (i, pc) in seq.iter().enumerate().filter(|(_, v)| v.1 == Role::Pc) {
                if let Some(sc) = seq[i + 1..].iter().find(|v| v.1 == Role::Sc) {
                    out.extend(emit(pc, sc));
                }
            }
        }
    }
    out
}

/// Directed bipartite PC -> SC network; edge weight counts distinct
/// `(patient, pc_date, sc_date)` interactions for the pair.
pub fn build_referral_network(interactions: &[ReferralInteraction]) -> Result<Network> {
    let mut roles: BTreeMap<&str, Role> = BTreeMap::new();
    for it in interactions {
        roles.insert(&it.pc_id, Role::Pc);
        roles.insert(&it.sc_id, Role::Sc);
    }
    let ids: Vec<String> = roles.keys().map(|s| s.to_string()).collect();
    let index: HashMap<&str, usize> = roles.keys().enumerate().map(|(i, s)| (*s, i)).collect();
    let mut net = Network::new(ids.len(), true)
        .with_roles(roles.values().copied().collect())?
        .with_external_ids(ids)?;
    let mut seen = std::collections::HashSet::new();
    for it in interactions {
        if seen.insert((&it.pc_id, &it.sc_id, &it.patient_id, it.pc_date, it.sc_date)) {
            net.add_edge(index[it.pc_id.as_str()], index[it.sc_id.as_str()], 1.0)?;
        }
    }
    Ok(net)
}

/// Count of shared background attributes: same school, same residency
/// institution, any common hospital.
pub fn shared_background(a: &PhysicianProfile, b: &PhysicianProfile) -> u32 {
    let same = |x: &Option<String>, y: &Option<String>| matches!((x, y), (Some(x), Some(y)) if x == y);
    u32::from(same(&a.school, &b.school))
        + u32::from(same(&a.residency_institution, &b.residency_institution))
        + u32::from(a.hospital_ids.intersection(&b.hospital_ids).next().is_some())
}

/// Undirected network over every PC and SC physician, edges weighted by
/// [`shared_background`]. Node attribute `has_background` records whether the
/// profile carries any background data at all.
pub fn build_professional_network(profiles: &PhysicianTable) -> Result<Network> {
    let members: Vec<&PhysicianProfile> = profiles
        .profiles
        .iter()
        .filter(|p| p.role != Role::Unknown)
        .collect();
    let n = members.len();
    let edges: Vec<Vec<(usize, u32)>> = (0..n)
        .into_par_iter()
        .map(|i| {
            ((i + 1)..n)
                .filter_map(|j| {
                    let w = shared_background(members[i], members[j]);
                    (w > 0).then_some((j, w))
                })
                .collect()
        })
        .collect();
    let mut net = Network::new(n, false)
        .with_external_ids(members.iter().map(|p| p.physician_id.clone()).collect())?;
    for (i, row) in edges.into_iter().enumerate() {
        for (j, w) in row {
            net.add_edge(i, j, f64::from(w))?;
        }
    }
    net.set_attributes(
        vec!["has_background".into()],
        members
            .iter()
            .map(|p| vec![if p.has_background() { 1.0 } else { 0.0 }])
            .collect(),
    )?;
    Ok(net)
}

/// Upper bucket edges in days; a final open bucket collects everything above.
pub const INTERVAL_BUCKETS: [u32; 6] = [7, 14, 30, 60, 90, 180];

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalDistribution {
    pub bucket_edges: Vec<u32>,
    /// One more entry than `bucket_edges`.
    pub counts: Vec<usize>,
    pub cumulative: Vec<f64>,
}

impl IntervalDistribution {
    /// Cumulative fraction at the bucket ending at `days`.
    pub fn cumulative_at(&self, days: u32) -> Option<f64> {
        self.bucket_edges
            .iter()
            .position(|&e| e == days)
            .map(|i| self.cumulative[i])
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["bucket_days", "count", "cumulative_fraction"])?;
        for (i, (&c, &f)) in self.counts.iter().zip(&self.cumulative).enumerate() {
            let label = match self.bucket_edges.get(i) {
                Some(e) => e.to_string(),
                None => format!(">{}", self.bucket_edges.last().unwrap()),
            };
            wtr.write_record([label, c.to_string(), format!("{f:.6}")])?;
        }
        wtr.flush().map_err(|e| Error::io("<interval csv>", e))?;
        Ok(())
    }
}

/// Gap distribution over interactions (extract with an unbounded gap first).
pub fn interval_distribution(interactions: &[ReferralInteraction]) -> Result<IntervalDistribution> {
    if interactions.is_empty() {
        return Err(Error::invalid("interval distribution of zero interactions"));
    }
    let edges = INTERVAL_BUCKETS.to_vec();
    let mut counts = vec![0usize; edges.len() + 1];
    for it in interactions {
        let b = edges
            .iter()
            .position(|&e| it.gap_days <= e)
            .unwrap_or(edges.len());
        counts[b] += 1;
    }
    let total = interactions.len() as f64;
    let mut running = 0usize;
    let cumulative = counts
        .iter()
        .map(|&c| {
            running += c;
            running as f64 / total
        })
        .collect();
    Ok(IntervalDistribution {
        bucket_edges: edges,
        counts,
        cumulative,
    })
}

/// Number of patients by count of distinct physicians consulted.
pub fn physicians_per_patient_histogram(consultations: &[ConsultationRecord]) -> BTreeMap<usize, usize> {
    let mut per_patient: HashMap<&str, std::collections::HashSet<&str>> = HashMap::new();
    for c in consultations {
        per_patient
            .entry(&c.patient_id)
            .or_default()
            .insert(&c.physician_id);
    }
    let mut hist = BTreeMap::new();
    for set in per_patient.values() {
        *hist.entry(set.len()).or_insert(0) += 1;
    }
    hist
}

/// Maximum-likelihood exponent of a discrete power law `p(k) ∝ k^-a` truncated
/// to `[k_min, k_max]`, fitted to the histogram entries inside that range.
pub fn fit_power_law_exponent(hist: &BTreeMap<usize, usize>, k_min: usize, k_max: usize) -> Result<f64> {
    if k_min == 0 || k_max < k_min {
        return Err(Error::invalid("power-law support must satisfy 1 <= k_min <= k_max"));
    }
    let (n, sum_ln) = hist
        .range(k_min..=k_max)
        .fold((0.0, 0.0), |(n, s), (&k, &c)| (n + c as f64, s + c as f64 * (k as f64).ln()));
    if n == 0.0 {
        return Err(Error::invalid("no histogram mass inside the fit range"));
    }
    let neg_log_lik = |a: f64| {
        let z: f64 = (k_min..=k_max).map(|k| (k as f64).powf(-a)).sum();
        a * sum_ln + n * z.ln()
    };
    // The likelihood is log-concave in the exponent; golden-section search.
    let (mut lo, mut hi) = (1.0001_f64, 6.0_f64);
    let phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - phi * (hi - lo);
    let mut x2 = lo + phi * (hi - lo);
    let (mut f1, mut f2) = (neg_log_lik(x1), neg_log_lik(x2));
    while hi - lo > 1e-7 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - phi * (hi - lo);
            f1 = neg_log_lik(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + phi * (hi - lo);
            f2 = neg_log_lik(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}

pub fn write_histogram<W: Write>(hist: &BTreeMap<usize, usize>, out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["physicians", "patients"])?;
    for (k, c) in hist {
        wtr.write_record([k.to_string(), c.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<histogram>", e))?;
    Ok(())
}

/// Consultations per (year, specialty); unknown specialties grouped as `unknown`.
pub fn specialty_year_counts(
    consultations: &[ConsultationRecord],
    profiles: &PhysicianTable,
) -> BTreeMap<(i32, String), usize> {
    let mut out = BTreeMap::new();
    for c in consultations {
        let spec = profiles
            .get(&c.physician_id)
            .and_then(|p| p.specialty.clone())
            .unwrap_or_else(|| "unknown".into());
        *out.entry((c.date.year(), spec)).or_insert(0) += 1;
    }
    out
}

/// Physician counts per (school, birth decade, gender).
pub fn school_birth_decade_gender(profiles: &PhysicianTable) -> BTreeMap<(String, i32, String), usize> {
    let mut out = BTreeMap::new();
    for p in &profiles.profiles {
        if let (Some(school), Some(year)) = (&p.school, p.birth_year) {
            let key = (school.clone(), year.div_euclid(10) * 10, p.gender.as_str().to_string());
            *out.entry(key).or_insert(0) += 1;
        }
    }
    out
}

pub fn write_summary_tables<W: Write>(
    specialty_years: &BTreeMap<(i32, String), usize>,
    out: W,
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["year", "specialty", "consultations"])?;
    for ((y, s), c) in specialty_years {
        wtr.write_record([y.to_string(), s.clone(), c.to_string()])?;
    }
    wtr.flush().map_err(|e| Error::io("<summary>", e))?;
    Ok(())
}

pub fn write_interactions<W: Write>(interactions: &[ReferralInteraction], out: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(out);
    wtr.write_record(["pc_id", "sc_id", "patient_id", "pc_date", "sc_date", "gap_days"])?;
    for it in interactions {
        wtr.write_record([
            it.pc_id.clone(),
            it.sc_id.clone(),
            it.patient_id.clone(),
            it.pc_date.to_string(),
            it.sc_date.to_string(),
            it.gap_days.to_string(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<interactions>", e))?;
    Ok(())
}
