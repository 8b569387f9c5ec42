//! Seeded synthetic flow corpus with one benign cluster and three attack
//! families, each built to be visible to exactly one detector:
//!
//! * `family-S` looks benign in every statistic and token but uses the
//!   backdoor source port 31337, which the default signature set matches.
//! * `family-A` shifts `duration_ms` and `fwd_bytes` by 6.5–8 benign
//!   standard deviations. One in ten `family-S` flows carries extreme values
//!   in the same two columns, which stretches their min-max range so the
//!   shifted values stay inside the benign quantization bin.
//! * `family-L` pairs `udp` with `https`; both values are common in benign
//!   traffic but never together, and all numerics are benign.

use rand::distr::{Distribution, Uniform};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use super::{
    Column, ColumnKind, Dataset, DatasetError, DatasetSchema, FlowRecord, Label, Result, Value,
    DEFAULT_BENIGN_LABEL, DEFAULT_LABEL_COLUMN,
};

pub const FAMILY_SIGNATURE: &str = "family-S";
pub const FAMILY_ANOMALY: &str = "family-A";
pub const FAMILY_LM: &str = "family-L";

const BACKDOOR_PORT: f64 = 31337.0;
const DURATION: (f64, f64) = (1000.0, 20.0);
const FWD_BYTES: (f64, f64) = (5000.0, 100.0);
const PKT_COUNT: (f64, f64) = (40.0, 4.0);
const MEAN_IAT: (f64, f64) = (25.0, 2.5);
const ANCHOR_SIGMAS: f64 = 250.0;
const ANCHOR_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub benign: usize,
    pub signature: usize,
    pub anomaly: usize,
    pub lm: usize,
}

impl SynthConfig {
    pub fn new(benign: usize, signature: usize, anomaly: usize, lm: usize) -> Self {
        Self { benign, signature, anomaly, lm }
    }

    pub fn total(&self) -> usize {
        self.benign + self.signature + self.anomaly + self.lm
    }
}

pub fn synth_schema() -> DatasetSchema {
    let cat = |n: &str| Column { name: n.into(), kind: ColumnKind::Categorical };
    let num = |n: &str| Column { name: n.into(), kind: ColumnKind::Numeric };
    DatasetSchema::new(
        vec![
            cat("protocol"),
            cat("service"),
            cat("flag"),
            num("src_port"),
            num("duration_ms"),
            num("fwd_bytes"),
            num("pkt_count"),
            num("mean_iat_ms"),
        ],
        DEFAULT_LABEL_COLUMN,
        DEFAULT_BENIGN_LABEL,
    )
    .expect("static schema is valid")
}

/// Rule file matching `family-S` and nothing else the generator produces.
pub fn default_rules_text() -> &'static str {
    "# Signatures for the synthetic three-family corpus.\n\
     s_backdoor_port := src_port in [31337, 31337]\n\
     s_telnet_reject := service == \"telnet\" && flag == \"REJ\"\n"
}

struct Generator {
    rng: ChaCha8Rng,
    duration: Normal<f64>,
    fwd_bytes: Normal<f64>,
    pkt_count: Normal<f64>,
    mean_iat: Normal<f64>,
    port: Uniform<u32>,
}

fn pick<'a>(rng: &mut ChaCha8Rng, table: &[(&'a str, f64)]) -> &'a str {
    let mut u: f64 = rng.random();
    for (v, p) in table {
        if u < *p {
            return v;
        }
        u -= p;
    }
    table[table.len() - 1].0
}

fn round3(v: f64) -> f64 {
    (v * 1000.0).round() / 1000.0
}

impl Generator {
    fn new(seed: u64) -> Self {
        let normal = |(m, s): (f64, f64)| Normal::new(m, s).expect("valid normal");
        Self {
            rng: ChaCha8Rng::seed_from_u64(seed),
            duration: normal(DURATION),
            fwd_bytes: normal(FWD_BYTES),
            pkt_count: normal(PKT_COUNT),
            mean_iat: normal(MEAN_IAT),
            port: Uniform::new_inclusive(1024, 65535).expect("valid port range"),
        }
    }

    fn ephemeral_port(&mut self) -> f64 {
        loop {
            let p = self.port.sample(&mut self.rng) as f64;
            if p != BACKDOOR_PORT {
                return p;
            }
        }
    }

    fn benign_categoricals(&mut self) -> [&'static str; 3] {
        let protocol = pick(&mut self.rng, &[("tcp", 0.75), ("udp", 0.25)]);
        let (service, flag) = if protocol == "tcp" {
            (
                pick(&mut self.rng, &[("http", 0.4), ("https", 0.35), ("ssh", 0.1), ("smtp", 0.15)]),
                pick(&mut self.rng, &[("SF", 0.85), ("REJ", 0.1), ("S0", 0.05)]),
            )
        } else {
            (pick(&mut self.rng, &[("dns", 0.8), ("ntp", 0.2)]), "SF")
        };
        [protocol, service, flag]
    }

    /// `[src_port, duration_ms, fwd_bytes, pkt_count, mean_iat_ms]`
    fn benign_numerics(&mut self) -> [f64; 5] {
        let port = self.ephemeral_port();
        [
            port,
            round3(self.duration.sample(&mut self.rng).max(0.0)),
            round3(self.fwd_bytes.sample(&mut self.rng).max(0.0)),
            self.pkt_count.sample(&mut self.rng).round().max(1.0),
            round3(self.mean_iat.sample(&mut self.rng).max(0.0)),
        ]
    }

    fn record(cats: [&str; 3], nums: [f64; 5], label: Label) -> FlowRecord {
        let mut features: Vec<Value> = cats.iter().map(|c| Value::Text(c.to_string())).collect();
        features.extend(nums.iter().map(|&v| Value::Real(v)));
        FlowRecord::new(features, Some(label))
    }
}

/// Deterministic under `seed`; records are shuffled so families interleave.
pub fn synth_dataset(config: &SynthConfig, seed: u64) -> Result<Dataset> {
    if config.benign == 0 {
        return Err(DatasetError::Argument(
            "synthetic corpus needs at least one benign flow".into(),
        ));
    }
    let mut g = Generator::new(seed);
    let mut records = Vec::with_capacity(config.total());
    let attack = |tag: &str| Label::Attack(tag.to_string());

    for _ in 0..config.benign {
        let cats = g.benign_categoricals();
        let nums = g.benign_numerics();
        records.push(Generator::record(cats, nums, Label::Benign));
    }
    for i in 0..config.signature {
        let cats = g.benign_categoricals();
        let mut nums = g.benign_numerics();
        nums[0] = BACKDOOR_PORT;
        if i % ANCHOR_EVERY == 0 {
            nums[1] = DURATION.0 + ANCHOR_SIGMAS * DURATION.1;
            nums[2] = FWD_BYTES.0 + ANCHOR_SIGMAS * FWD_BYTES.1;
        }
        records.push(Generator::record(cats, nums, attack(FAMILY_SIGNATURE)));
    }
    for _ in 0..config.anomaly {
        let cats = g.benign_categoricals();
        let mut nums = g.benign_numerics();
        let shift_d: f64 = g.rng.random_range(6.5..8.0);
        let shift_b: f64 = g.rng.random_range(6.5..8.0);
        nums[1] = round3(DURATION.0 + shift_d * DURATION.1);
        nums[2] = round3(FWD_BYTES.0 + shift_b * FWD_BYTES.1);
        records.push(Generator::record(cats, nums, attack(FAMILY_ANOMALY)));
    }
    for _ in 0..config.lm {
        let nums = g.benign_numerics();
        records.push(Generator::record(["udp", "https", "SF"], nums, attack(FAMILY_LM)));
    }
    records.shuffle(&mut g.rng);
    Ok(Dataset::new(synth_schema(), records))
}
