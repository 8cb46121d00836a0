#![allow(dead_code)]

use mwrn::network::{NetworkConfig, NetworkParams};
use mwrn::quantizer::Resolution;

pub fn db(x: f64) -> f64 {
    10f64.powf(x / 10.0)
}

/// Mixed-ADC-#1 profile for N = 100: antenna counts for 1..8 bits.
pub const TABLE1_100: [usize; 8] = [7, 12, 15, 11, 14, 22, 9, 10];

pub fn from_counts(counts: &[usize]) -> Vec<Resolution> {
    counts
        .iter()
        .enumerate()
        .flat_map(|(b, &n)| std::iter::repeat_n(Resolution::Bits(b as u8 + 1), n))
        .collect()
}

pub fn table1_100() -> Vec<Resolution> {
    from_counts(&TABLE1_100)
}

pub fn uniform(n: usize, bits: u8) -> Vec<Resolution> {
    vec![Resolution::Bits(bits); n]
}

pub fn lossless(n: usize) -> Vec<Resolution> {
    vec![Resolution::Infinite; n]
}

pub fn params(n: usize, k: usize, p_u_db: f64, p_r_db: f64, res: Vec<Resolution>) -> NetworkParams {
    NetworkParams::new(NetworkConfig::homogeneous(n, k, db(p_u_db), db(p_r_db)), res).unwrap()
}
