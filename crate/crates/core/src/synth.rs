//! Synthetic consultation data with planted referral mechanisms.
//!
//! Each referral draws its (PC, SC) pair jointly with probability proportional to
//!
//! ```text
//! exp(alpha * shared_background(pc, sc) + gamma * ln(1 + popularity(sc)) + beta * same_gender(pc, sc))
//! ```
//!
//! where `popularity(sc)` is the specialist's degree in the professional
//! network. Visits that do not lead to a referral pick their PC uniformly. Every patient consults a power-law number of distinct physicians
//! organised in episodes: a PC visit, optionally followed by a referral to an
//! SC, optionally followed by unrelated SC follow-ups. Referral gaps are drawn
//! so that a configured share falls within 30 days.

use std::collections::{BTreeSet, HashSet};
use std::io::Write;

use chrono::{Days, NaiveDate};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::Role;
use crate::ingest::{sort_records, ConsultationRecord, Gender, IngestConfig, PhysicianProfile, PhysicianTable, StudyWindow};
use crate::netbuild::{build_professional_network, shared_background, ReferralInteraction};
use crate::numkit::rng::{label, stream, Rng as StreamRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthConfig {
    pub n_pc: usize,
    pub n_sc: usize,
    /// Physicians without a specialty; their visits are invisible to referral extraction.
    pub n_unknown: usize,
    pub n_hospitals: usize,
    pub n_schools: usize,
    /// Zipf exponent for school and hospital sizes.
    pub affiliation_skew: f64,
    pub school_probability: f64,
    pub residency_probability: f64,
    /// Chance of each additional hospital affiliation beyond the first.
    pub extra_hospital_probability: f64,
    /// Social coupling on shared background, in `[0, 1]`.
    pub alpha: f64,
    /// Preference for professionally well-connected specialists, `>= 0`.
    pub gamma: f64,
    /// Gender homophily, in `[0, 1]`.
    pub beta: f64,
    pub patients: usize,
    /// Exponent of the power law on distinct physicians per patient.
    pub physicians_per_patient_exponent: f64,
    pub max_physicians_per_patient: usize,
    pub referral_probability: f64,
    pub followup_probability: f64,
    pub unknown_visit_probability: f64,
    /// Target share of referral gaps of at most 30 days.
    pub gap_within_30_target: f64,
    pub max_gap_days: u32,
    pub missing_birth_year_probability: f64,
    pub missing_background_probability: f64,
    pub window: StudyWindow,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_pc: 250,
            n_sc: 710,
            n_unknown: 40,
            n_hospitals: 20,
            n_schools: 20,
            affiliation_skew: 1.5,
            school_probability: 0.5,
            residency_probability: 0.3,
            extra_hospital_probability: 0.1,
            alpha: 0.8,
            gamma: 0.5,
            beta: 0.0,
            patients: 115_000,
            physicians_per_patient_exponent: 2.5,
            max_physicians_per_patient: 40,
            referral_probability: 0.8,
            followup_probability: 0.3,
            unknown_visit_probability: 0.05,
            gap_within_30_target: 0.22,
            max_gap_days: 400,
            missing_birth_year_probability: 0.02,
            missing_background_probability: 0.02,
            window: StudyWindow::default(),
            seed: 42,
        }
    }
}

/// Single-mechanism generators for attribution checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    /// Referrals follow specialist professional degree only (`gamma = 2`).
    Popularity,
    /// Referrals follow same-gender pairs only (`beta = 1`).
    GenderHomophily,
}

impl SynthConfig {
    /// Many evenly sized schools and hospitals keep degree and eigenvector
    /// centrality from collapsing onto one large unit, so a degree-driven
    /// mechanism stays distinguishable from an eigenvector-driven one.
    pub fn mechanism(mechanism: Mechanism, seed: u64) -> Self {
        let (gamma, beta) = match mechanism {
            Mechanism::Popularity => (2.0, 0.0),
            Mechanism::GenderHomophily => (0.0, 1.0),
        };
        SynthConfig {
            n_hospitals: 100,
            n_schools: 100,
            affiliation_skew: 1.0,
            school_probability: 0.9,
            residency_probability: 0.7,
            extra_hospital_probability: 0.3,
            alpha: 0.0,
            gamma,
            beta,
            seed,
            ..SynthConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |name: &str, v: f64| {
            if (0.0..=1.0).contains(&v) {
                Ok(())
            } else {
                Err(Error::invalid(format!("{name} = {v} must lie in [0, 1]")))
            }
        };
        if self.n_pc == 0 || self.n_sc == 0 {
            return Err(Error::invalid("synthetic data needs at least one PC and one SC"));
        }
        if self.n_hospitals == 0 || self.n_schools == 0 || self.patients == 0 {
            return Err(Error::invalid("hospital, school and patient counts must be positive"));
        }
        unit("alpha", self.alpha)?;
        unit("beta", self.beta)?;
        if !(self.gamma >= 0.0 && self.gamma.is_finite()) {
            return Err(Error::invalid(format!("gamma = {} must be >= 0", self.gamma)));
        }
        for (name, v) in [
            ("school_probability", self.school_probability),
            ("residency_probability", self.residency_probability),
            ("extra_hospital_probability", self.extra_hospital_probability),
            ("referral_probability", self.referral_probability),
            ("followup_probability", self.followup_probability),
            ("unknown_visit_probability", self.unknown_visit_probability),
            ("gap_within_30_target", self.gap_within_30_target),
            ("missing_birth_year_probability", self.missing_birth_year_probability),
            ("missing_background_probability", self.missing_background_probability),
        ] {
            unit(name, v)?;
        }
        if self.followup_probability >= 1.0 || self.extra_hospital_probability >= 1.0 {
            return Err(Error::invalid("followup and extra-hospital probabilities must be below 1"));
        }
        if self.max_gap_days <= 30 {
            return Err(Error::invalid("max_gap_days must exceed 30"));
        }
        if self.max_physicians_per_patient == 0 || self.physicians_per_patient_exponent <= 1.0 {
            return Err(Error::invalid("physician-count power law needs k_max >= 1 and exponent > 1"));
        }
        Ok(())
    }
}

/// Realized referral propensities, row-major `pc x sc`.
#[derive(Clone, Debug)]
pub struct PropensityMatrix {
    pub pc_ids: Vec<String>,
    pub sc_ids: Vec<String>,
    pub shared: Vec<u8>,
    pub same_gender: Vec<bool>,
    pub values: Vec<f64>,
}

impl PropensityMatrix {
    pub fn get(&self, pc: usize, sc: usize) -> f64 {
        self.values[pc * self.sc_ids.len() + sc]
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["pc_id", "sc_id", "shared_background", "same_gender", "propensity"])?;
        let m = self.sc_ids.len();
        for (i, pc) in self.pc_ids.iter().enumerate() {
            for (j, sc) in self.sc_ids.iter().enumerate() {
                let k = i * m + j;
                wtr.write_record([
                    pc.as_str(),
                    sc.as_str(),
                    &self.shared[k].to_string(),
                    if self.same_gender[k] { "1" } else { "0" },
                    &format!("{:.9e}", self.values[k]),
                ])?;
            }
        }
        wtr.flush().map_err(|e| Error::io("<propensity>", e))?;
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct SynthOutput {
    pub config: SynthConfig,
    /// Sorted by physician id.
    pub physicians: Vec<PhysicianProfile>,
    /// In canonical ingest order.
    pub consultations: Vec<ConsultationRecord>,
    /// Ground-truth PC -> SC referrals, one per referral episode.
    pub referrals: Vec<ReferralInteraction>,
    pub propensity: PropensityMatrix,
    /// Professional-network degree of each SC, aligned with `propensity.sc_ids`.
    pub sc_popularity: Vec<usize>,
}

impl SynthOutput {
    pub fn physician_table(&self) -> Result<PhysicianTable> {
        PhysicianTable::new(self.physicians.clone())
    }

    pub fn realized_within_30(&self) -> f64 {
        let n = self.referrals.len().max(1) as f64;
        self.referrals.iter().filter(|r| r.gap_days <= 30).count() as f64 / n
    }

    /// Key/value provenance of the latent parameters and realized counts.
    pub fn manifest(&self) -> Vec<(String, String)> {
        let c = &self.config;
        let mut rows: Vec<(String, String)> = vec![
            ("seed", c.seed.to_string()),
            ("n_pc", c.n_pc.to_string()),
            ("n_sc", c.n_sc.to_string()),
            ("n_unknown", c.n_unknown.to_string()),
            ("n_hospitals", c.n_hospitals.to_string()),
            ("n_schools", c.n_schools.to_string()),
            ("affiliation_skew", c.affiliation_skew.to_string()),
            ("school_probability", c.school_probability.to_string()),
            ("residency_probability", c.residency_probability.to_string()),
            ("extra_hospital_probability", c.extra_hospital_probability.to_string()),
            ("alpha", c.alpha.to_string()),
            ("gamma", c.gamma.to_string()),
            ("beta", c.beta.to_string()),
            ("patients", c.patients.to_string()),
            ("physicians_per_patient_exponent", c.physicians_per_patient_exponent.to_string()),
            ("max_physicians_per_patient", c.max_physicians_per_patient.to_string()),
            ("referral_probability", c.referral_probability.to_string()),
            ("followup_probability", c.followup_probability.to_string()),
            ("unknown_visit_probability", c.unknown_visit_probability.to_string()),
            ("gap_within_30_target", c.gap_within_30_target.to_string()),
            ("max_gap_days", c.max_gap_days.to_string()),
            ("window_start", c.window.start.to_string()),
            ("window_end", c.window.end.to_string()),
            ("realized_consultations", self.consultations.len().to_string()),
            ("realized_referrals", self.referrals.len().to_string()),
            ("realized_within_30", format!("{:.6}", self.realized_within_30())),
        ]
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect();
        rows.push((
            "propensity_formula".into(),
            "exp(alpha*shared_background + gamma*ln(1+professional_degree_sc) + beta*same_gender)".into(),
        ));
        rows
    }

    pub fn write_manifest<W: Write>(&self, out: W) -> Result<()> {
        let mut wtr = csv::Writer::from_writer(out);
        wtr.write_record(["key", "value"])?;
        for (k, v) in self.manifest() {
            wtr.write_record([k, v])?;
        }
        wtr.flush().map_err(|e| Error::io("<manifest>", e))?;
        Ok(())
    }
}

const SC_SPECIALTIES: [&str; 10] = [
    "Cardiology",
    "Dermatology",
    "Orthopedics",
    "Radiology",
    "Gastroenterology",
    "Neurology",
    "Ophthalmology",
    "Psychiatry",
    "Urology",
    "Endocrinology",
];

fn zipf_weights(n: usize, s: f64) -> Vec<f64> {
    let w: Vec<f64> = (1..=n).map(|k| (k as f64).powf(-s)).collect();
    cumulative(&w)
}

fn cumulative(w: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    w.iter()
        .map(|x| {
            acc += x;
            acc
        })
        .collect()
}

fn sample_cdf(cdf: &[f64], rng: &mut impl Rng) -> usize {
    let total = *cdf.last().expect("nonempty cdf");
    let u = rng.gen::<f64>() * total;
    cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
}

fn make_physicians(cfg: &SynthConfig) -> Vec<PhysicianProfile> {
    let total = cfg.n_pc + cfg.n_sc + cfg.n_unknown;
    let width = total.to_string().len().max(4);
    let school_cdf = zipf_weights(cfg.n_schools, cfg.affiliation_skew);
    let hospital_cdf = zipf_weights(cfg.n_hospitals, cfg.affiliation_skew);
    let hospital_id = |h: usize| format!("H{:03}", h + 1);
    let end_year = cfg.window.end_year();
    (0..total)
        .map(|i| {
            let mut rng = stream(cfg.seed, &[label("physician"), i as u64]);
            let (role, specialty) = if i < cfg.n_pc {
                let s = if rng.gen_bool(0.7) { "Family Medicine" } else { "General Practice" };
                (Role::Pc, Some(s.to_string()))
            } else if i < cfg.n_pc + cfg.n_sc {
                let s = SC_SPECIALTIES[rng.gen_range(0..SC_SPECIALTIES.len())];
                (Role::Sc, Some(s.to_string()))
            } else {
                (Role::Unknown, None)
            };
            let gender = if rng.gen_bool(0.5) { Gender::F } else { Gender::M };
            let birth_year = (!rng.gen_bool(cfg.missing_birth_year_probability))
                .then(|| rng.gen_range(end_year - 67..=end_year - 28));
            let no_background = rng.gen_bool(cfg.missing_background_probability);
            let school = (!no_background && rng.gen_bool(cfg.school_probability))
                .then(|| format!("S{:03}", sample_cdf(&school_cdf, &mut rng) + 1));
            let residency = (!no_background && rng.gen_bool(cfg.residency_probability))
                .then(|| hospital_id(sample_cdf(&hospital_cdf, &mut rng)));
            let mut hospital_ids = BTreeSet::new();
            if !no_background {
                let mut count = 1;
                while count < cfg.n_hospitals && rng.gen_bool(cfg.extra_hospital_probability) {
                    count += 1;
                }
                while hospital_ids.len() < count {
                    hospital_ids.insert(hospital_id(sample_cdf(&hospital_cdf, &mut rng)));
                }
            }
            PhysicianProfile {
                physician_id: format!("D{:0width$}", i + 1),
                gender,
                birth_year,
                role,
                specialty,
                school,
                residency_institution: residency,
                hospital_ids,
            }
        })
        .collect()
}

#[derive(Clone, Copy)]
enum Visit {
    Pc(usize),
    Sc(usize),
    Unknown(usize),
}

type Journey = (Vec<(u64, Visit)>, Vec<(usize, usize)>);

struct Pools<'a> {
    cfg: &'a SynthConfig,
    /// Cumulative propensity over row-major (pc, sc) pairs.
    pair_cdf: Vec<f64>,
    k_cdf: Vec<f64>,
}

impl Pools<'_> {
    fn pick_distinct(&self, n: usize, used: &HashSet<(u8, usize)>, tag: u8, rng: &mut StreamRng) -> Option<usize> {
        if (0..n).all(|i| used.contains(&(tag, i))) {
            return None;
        }
        loop {
            let i = rng.gen_range(0..n);
            if !used.contains(&(tag, i)) {
                return Some(i);
            }
        }
    }

    fn pick_pair(&self, used: &HashSet<(u8, usize)>, rng: &mut StreamRng) -> Option<(usize, usize)> {
        (0..200).find_map(|_| {
            let k = sample_cdf(&self.pair_cdf, rng);
            let (pc, sc) = (k / self.cfg.n_sc, k % self.cfg.n_sc);
            (!used.contains(&(0, pc)) && !used.contains(&(1, sc))).then_some((pc, sc))
        })
    }

    fn draw_gap(&self, rng: &mut StreamRng) -> u32 {
        if rng.gen_bool(self.cfg.gap_within_30_target) {
            rng.gen_range(0..=30)
        } else {
            // log-uniform on [31, max_gap]
            let (lo, hi) = (31f64.ln(), f64::from(self.cfg.max_gap_days).ln());
            (rng.gen_range(lo..=hi).exp().round() as u32).clamp(31, self.cfg.max_gap_days)
        }
    }

    /// Visits as `(day offset, visit)` plus referral episodes as indices of
    /// (pc visit, sc visit) pairs.
    fn journey(&self, rng: &mut StreamRng) -> Journey {
        let cfg = self.cfg;
        let k = sample_cdf(&self.k_cdf, rng) + 1;
        let mut used: HashSet<(u8, usize)> = HashSet::new();
        let mut visits = Vec::with_capacity(k);
        let mut referrals = Vec::new();
        let mut day: u64 = 0;
        let mut remaining = k;
        while remaining > 0 {
            if !visits.is_empty() {
                day += rng.gen_range(1..=14);
            }
            if cfg.n_unknown > 0 && rng.gen_bool(cfg.unknown_visit_probability) {
                if let Some(u) = self.pick_distinct(cfg.n_unknown, &used, 2, rng) {
                    used.insert((2, u));
                    visits.push((day, Visit::Unknown(u)));
                    remaining -= 1;
                    day += 1;
                    continue;
                }
            }
            let refer = remaining >= 2 && rng.gen_bool(cfg.referral_probability);
            let pair = if refer { self.pick_pair(&used, rng) } else { None };
            let pc = match pair {
                Some((pc, _)) => pc,
                None => match self.pick_distinct(cfg.n_pc, &used, 0, rng) {
                    Some(pc) => pc,
                    None => break,
                },
            };
            used.insert((0, pc));
            visits.push((day, Visit::Pc(pc)));
            remaining -= 1;
            let Some((_, sc)) = pair else {
                continue;
            };
            used.insert((1, sc));
            day += u64::from(self.draw_gap(rng));
            referrals.push((visits.len() - 1, visits.len()));
            visits.push((day, Visit::Sc(sc)));
            remaining -= 1;
            while remaining > 0 && rng.gen_bool(cfg.followup_probability) {
                let Some(f) = self.pick_distinct(cfg.n_sc, &used, 1, rng) else {
                    break;
                };
                used.insert((1, f));
                day += rng.gen_range(1..=20);
                visits.push((day, Visit::Sc(f)));
                remaining -= 1;
            }
        }
        (visits, referrals)
    }
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthOutput> {
    cfg.validate()?;
    let physicians = make_physicians(cfg);
    let (pcs, rest) = physicians.split_at(cfg.n_pc);
    let (scs, unknowns) = rest.split_at(cfg.n_sc);

    let table = PhysicianTable::new(physicians.clone())?;
    let professional = build_professional_network(&table)?;
    let index = professional.index_by_external_id();
    let sc_popularity: Vec<usize> = scs
        .iter()
        .map(|p| professional.degree(index[p.physician_id.as_str()]))
        .collect();

    let m = cfg.n_sc;
    let mut shared = vec![0u8; cfg.n_pc * m];
    let mut same_gender = vec![false; cfg.n_pc * m];
    let mut values = vec![0.0; cfg.n_pc * m];
    for (i, pc) in pcs.iter().enumerate() {
        for (j, sc) in scs.iter().enumerate() {
            let k = i * m + j;
            shared[k] = shared_background(pc, sc) as u8;
            same_gender[k] = pc.gender == sc.gender && pc.gender != Gender::Unknown;
            values[k] = (cfg.alpha * f64::from(shared[k])
                + cfg.gamma * (1.0 + sc_popularity[j] as f64).ln()
                + cfg.beta * f64::from(u8::from(same_gender[k])))
            .exp();
        }
    }
    let pools = Pools {
        cfg,
        pair_cdf: cumulative(&values),
        k_cdf: cumulative(
            &(1..=cfg.max_physicians_per_patient)
                .map(|k| (k as f64).powf(-cfg.physicians_per_patient_exponent))
                .collect::<Vec<_>>(),
        ),
    };

    let span = (cfg.window.end - cfg.window.start).num_days() as u64;
    let width = cfg.patients.to_string().len();
    let per_patient: Vec<(Vec<ConsultationRecord>, Vec<ReferralInteraction>)> = (0..cfg.patients)
        .into_par_iter()
        .map(|p| {
            let mut rng = stream(cfg.seed, &[label("patient"), p as u64]);
            let (mut visits, episodes) = pools.journey(&mut rng);
            let length = visits.last().map_or(0, |v| v.0);
            if length > span {
                visits.retain(|v| v.0 <= span);
            }
            let start = rng.gen_range(0..=span.saturating_sub(length));
            let date = |off: u64| cfg.window.start + Days::new(start + off);
            let patient_id = format!("P{:0width$}", p + 1);
            let records = visits
                .iter()
                .map(|&(off, v)| {
                    let doc = match v {
                        Visit::Pc(i) => &pcs[i],
                        Visit::Sc(i) => &scs[i],
                        Visit::Unknown(i) => &unknowns[i],
                    };
                    let hospital = if doc.hospital_ids.is_empty() {
                        "H00".to_string()
                    } else {
                        let h = rng.gen_range(0..doc.hospital_ids.len());
                        doc.hospital_ids.iter().nth(h).unwrap().clone()
                    };
                    ConsultationRecord {
                        patient_id: patient_id.clone(),
                        physician_id: doc.physician_id.clone(),
                        date: date(off),
                        hospital_id: hospital,
                    }
                })
                .collect();
            let referrals = episodes
                .iter()
                .filter(|&&(_, s)| s < visits.len())
                .map(|&(a, b)| {
                    let (Visit::Pc(pc), Visit::Sc(sc)) = (visits[a].1, visits[b].1) else {
                        unreachable!("episodes pair a PC visit with an SC visit")
                    };
                    ReferralInteraction {
                        pc_id: pcs[pc].physician_id.clone(),
                        sc_id: scs[sc].physician_id.clone(),
                        patient_id: patient_id.clone(),
                        pc_date: date(visits[a].0),
                        sc_date: date(visits[b].0),
                        gap_days: (visits[b].0 - visits[a].0) as u32,
                    }
                })
                .collect();
            (records, referrals)
        })
        .collect();

    let mut consultations = Vec::new();
    let mut referrals = Vec::new();
    for (c, r) in per_patient {
        consultations.extend(c);
        referrals.extend(r);
    }
    sort_records(&mut consultations);
    referrals.sort();

    Ok(SynthOutput {
        config: cfg.clone(),
        physicians: table.profiles,
        consultations,
        referrals,
        propensity: PropensityMatrix {
            pc_ids: pcs.iter().map(|p| p.physician_id.clone()).collect(),
            sc_ids: scs.iter().map(|p| p.physician_id.clone()).collect(),
            shared,
            same_gender,
            values,
        },
        sc_popularity,
    })
}

/// Ingest settings matching what the generator writes.
pub fn ingest_config(cfg: &SynthConfig) -> IngestConfig {
    IngestConfig {
        window: cfg.window,
        ..IngestConfig::default()
    }
}

/// Helper for tests and reports: the date `days` after the window start.
pub fn window_day(cfg: &SynthConfig, days: u64) -> NaiveDate {
    cfg.window.start + Days::new(days)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            n_pc: 2,
            n_sc: 3,
            n_unknown: 1,
            patients: 200,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn census_matches_config() {
        let out = generate(&small()).unwrap();
        let c = out.physician_table().unwrap().census();
        assert_eq!((c.pc, c.sc, c.unknown), (2, 3, 1));
    }

    #[test]
    fn infeasible_configs_rejected() {
        assert!(generate(&SynthConfig { n_sc: 0, ..small() }).is_err());
        assert!(generate(&SynthConfig { alpha: 1.5, ..small() }).is_err());
        assert!(generate(&SynthConfig { gamma: -1.0, ..small() }).is_err());
    }

    #[test]
    fn reproducible_from_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.consultations, b.consultations);
        assert_eq!(a.referrals, b.referrals);
        let c = generate(&SynthConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.consultations, c.consultations);
    }

    #[test]
    fn dates_stay_in_window() {
        let cfg = SynthConfig {
            patients: 2000,
            n_pc: 30,
            n_sc: 60,
            ..SynthConfig::default()
        };
        let out = generate(&cfg).unwrap();
        assert!(out.consultations.iter().all(|c| cfg.window.contains(c.date)));
        assert!(out.referrals.iter().all(|r| r.sc_date >= r.pc_date));
        assert_eq!(window_day(&cfg, 0), cfg.window.start);
    }
}
