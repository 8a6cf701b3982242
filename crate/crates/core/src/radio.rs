//! Abstract PHY: log-distance path loss with shadowing and blockage, a
//! 3-sector antenna pattern, SINR combining, a CQI-style MCS table with a
//! logistic block-error curve, and transport-block sizing.
//!
//! Link randomness (shadowing draw, blockage draw) is fixed per link for a
//! whole run; devices are static.

use crate::engine::RngStream;
use serde::{Deserialize, Serialize};

pub const PRB_SUBCARRIERS: u64 = 12;
pub const SYMBOLS_PER_TTI: u64 = 14;
pub const SUBCARRIER_HZ: f64 = 30_000.0;
pub const PRB_BANDWIDTH_HZ: f64 = PRB_SUBCARRIERS as f64 * SUBCARRIER_HZ;
const THERMAL_NOISE_DBM_HZ: f64 = -174.0;

/// Radio constants. Defaults follow the indoor-factory deployment profile
/// (2.6 GHz FDD, 40 MHz per direction, 106 PRBs at 30 kHz subcarriers).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadioConfig {
    pub carrier_ghz: f64,
    pub prbs: u16,
    /// Path loss at 1 m in dB. Default derives from the indoor-factory LOS
    /// form at the configured carrier: 31.84 + 19 log10(f_GHz).
    pub pl0_db: f64,
    pub path_loss_exponent: f64,
    pub shadowing_sigma_db: f64,
    pub blocker_density_per_m2: f64,
    pub blocker_mean_width_m: f64,
    pub blockage_penalty_db: f64,
    pub antenna_peak_gain_dbi: f64,
    pub antenna_beamwidth_deg: f64,
    pub antenna_front_back_db: f64,
    pub tx_power_ul_w: f64,
    pub tx_power_dl_w: f64,
    pub noise_figure_db: f64,
    /// Logistic BLER slope in dB.
    pub bler_slope_db: f64,
    pub bler_target_urllc: f64,
    pub bler_target_ai: f64,
    /// Fraction of resource elements spent on control/reference overhead.
    pub overhead: f64,
    /// Smoothing factor of the measured-SINR estimate used for MCS selection.
    pub sinr_ema_alpha: f64,
    /// Force every transport block to decode (noise-free link testing).
    pub force_bler_zero: bool,
    /// Force a fixed block error probability regardless of SINR.
    pub force_bler: Option<f64>,
}

impl Default for RadioConfig {
    fn default() -> Self {
        let carrier_ghz = 2.6;
        RadioConfig {
            carrier_ghz,
            prbs: 106,
            pl0_db: 31.84 + 19.0 * carrier_ghz.log10(),
            path_loss_exponent: 2.15,
            shadowing_sigma_db: 4.0,
            blocker_density_per_m2: 0.15,
            blocker_mean_width_m: 1.25,
            blockage_penalty_db: 15.0,
            antenna_peak_gain_dbi: 14.0,
            antenna_beamwidth_deg: 70.0,
            antenna_front_back_db: 20.0,
            tx_power_ul_w: 0.2,
            tx_power_dl_w: 0.5,
            noise_figure_db: 5.0,
            bler_slope_db: 0.5,
            bler_target_urllc: 0.01,
            bler_target_ai: 0.1,
            overhead: 0.14,
            sinr_ema_alpha: 0.2,
            force_bler_zero: false,
            force_bler: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Position {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Position { x, y, z }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        ((self.x - other.x).powi(2) + (self.y - other.y).powi(2) + (self.z - other.z).powi(2))
            .sqrt()
    }
}

/// Site geometry: one gNB, three sectors, static devices.
#[derive(Debug, Clone)]
pub struct CellGeometry {
    pub gnb: Position,
    pub sector_azimuths_deg: [f64; 3],
}

impl CellGeometry {
    /// Azimuth of `p` as seen from the gNB, degrees in [0, 360).
    pub fn bearing_deg(&self, p: &Position) -> f64 {
        let deg = (p.y - self.gnb.y).atan2(p.x - self.gnb.x).to_degrees();
        deg.rem_euclid(360.0)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    10f64.powf(dbm / 10.0)
}

pub fn watts_to_dbm(w: f64) -> f64 {
    10.0 * (w * 1000.0).log10()
}

/// Distance-dependent path loss in dB; distances below 0.1 m clamp to 0.1 m.
pub fn path_loss_db(cfg: &RadioConfig, a: &Position, b: &Position) -> f64 {
    let d = a.distance(b).max(0.1);
    cfg.pl0_db + 10.0 * cfg.path_loss_exponent * d.log10()
}

/// Parabolic sector pattern: peak gain on boresight, quadratic roll-off,
/// floored at the front-to-back ratio.
pub fn sector_pattern_db(cfg: &RadioConfig, boresight_deg: f64, bearing_deg: f64) -> f64 {
    let mut delta = (bearing_deg - boresight_deg).rem_euclid(360.0);
    if delta > 180.0 {
        delta = 360.0 - delta;
    }
    let rolloff = 12.0 * (delta / cfg.antenna_beamwidth_deg).powi(2);
    cfg.antenna_peak_gain_dbi - rolloff.min(cfg.antenna_front_back_db)
}

/// Probability that a link of length `d` is blocked, from the blocker field
/// density and mean width.
pub fn blockage_probability(cfg: &RadioConfig, d_m: f64) -> f64 {
    1.0 - (-cfg.blocker_density_per_m2 * cfg.blocker_mean_width_m * d_m).exp()
}

/// Per-sector link condition, drawn once per run.
#[derive(Debug, Clone, Copy)]
pub struct SectorLink {
    pub path_loss_db: f64,
    pub pattern_db: f64,
    pub shadowing_db: f64,
    pub blocked: bool,
}

impl SectorLink {
    /// Total link gain in dB including antenna pattern, shadowing and the
    /// blockage penalty when blocked.
    pub fn gain_db(&self, cfg: &RadioConfig) -> f64 {
        -self.path_loss_db + self.pattern_db
            - self.shadowing_db
            - if self.blocked {
                cfg.blockage_penalty_db
            } else {
                0.0
            }
    }
}

/// Radio condition of one device toward every sector of the site.
#[derive(Debug, Clone)]
pub struct LinkState {
    pub device_id: u32,
    pub position: Position,
    pub serving_cell: usize,
    pub sectors: [SectorLink; 3],
}

impl LinkState {
    pub fn serving_gain_db(&self, cfg: &RadioConfig) -> f64 {
        self.sectors[self.serving_cell].gain_db(cfg)
    }
}

/// Deterministic serving-sector choice: argmax of path gain plus pattern
/// gain, ties broken by the lowest sector index.
pub fn assign_cell(cfg: &RadioConfig, geom: &CellGeometry, device: &Position) -> usize {
    let pl = path_loss_db(cfg, &geom.gnb, device);
    let bearing = geom.bearing_deg(device);
    let mut best = 0;
    let mut best_gain = f64::NEG_INFINITY;
    for (s, az) in geom.sector_azimuths_deg.iter().enumerate() {
        let gain = -pl + sector_pattern_db(cfg, *az, bearing);
        if gain > best_gain {
            best_gain = gain;
            best = s;
        }
    }
    best
}

/// Builds the per-run link state of a device: serving sector plus one
/// shadowing and one blockage draw per sector. Re-evaluating with the same
/// streams yields identical values; devices are static.
pub fn build_link(
    cfg: &RadioConfig,
    geom: &CellGeometry,
    device_id: u32,
    device: &Position,
    shadowing: &mut RngStream,
    blockage: &mut RngStream,
) -> LinkState {
    let pl = path_loss_db(cfg, &geom.gnb, device);
    let bearing = geom.bearing_deg(device);
    let d = geom.gnb.distance(device);
    let p_block = blockage_probability(cfg, d);
    let sectors = std::array::from_fn(|s| SectorLink {
        path_loss_db: pl,
        pattern_db: sector_pattern_db(cfg, geom.sector_azimuths_deg[s], bearing),
        shadowing_db: shadowing.normal(0.0, cfg.shadowing_sigma_db),
        blocked: blockage.bernoulli(p_block),
    });
    LinkState {
        device_id,
        position: *device,
        serving_cell: assign_cell(cfg, geom, device),
        sectors,
    }
}

/// Thermal noise power over `prbs` resource blocks, in mW.
pub fn noise_mw(cfg: &RadioConfig, prbs: u16) -> f64 {
    let bw = prbs as f64 * PRB_BANDWIDTH_HZ;
    dbm_to_mw(THERMAL_NOISE_DBM_HZ + 10.0 * bw.log10() + cfg.noise_figure_db)
}

/// SINR in dB from linear signal, noise and aggregate interference powers.
pub fn sinr_db(signal_mw: f64, noise_mw: f64, interference_mw: f64) -> f64 {
    linear_to_db(signal_mw / (noise_mw + interference_mw))
}

/// Number of PRBs shared by two contiguous allocations.
pub fn prb_overlap(a_start: u16, a_len: u16, b_start: u16, b_len: u16) -> u16 {
    let lo = a_start.max(b_start);
    let hi = (a_start + a_len).min(b_start + b_len);
    hi.saturating_sub(lo)
}

/// Modulation-and-coding abstraction: spectral efficiency in bits per
/// resource element and the SINR at which the block error rate is 0.5.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McsEntry {
    pub index: u8,
    pub spectral_eff: f64,
    pub snr50_db: f64,
}

/// 15-entry table with CQI-like efficiencies and evenly spaced midpoints
/// from -7 dB to 20 dB.
pub fn default_mcs_table() -> Vec<McsEntry> {
    const EFF: [f64; 15] = [
        0.1523, 0.2344, 0.3770, 0.6016, 0.8770, 1.1758, 1.4766, 1.9141, 2.4063, 2.7305, 3.3223,
        3.9023, 4.5234, 5.1152, 5.5547,
    ];
    EFF.iter()
        .enumerate()
        .map(|(i, &eff)| McsEntry {
            index: (i + 1) as u8,
            spectral_eff: eff,
            snr50_db: -7.0 + i as f64 * 27.0 / 14.0,
        })
        .collect()
}

/// Logistic block error rate at `sinr_db` for the given entry.
pub fn bler(sinr_db: f64, mcs: &McsEntry, slope_db: f64) -> f64 {
    1.0 / (1.0 + ((sinr_db - mcs.snr50_db) / slope_db).exp())
}

/// Highest-index entry whose predicted BLER meets the target; entry 1 when
/// nothing qualifies.
pub fn select_mcs<'t>(
    table: &'t [McsEntry],
    sinr_db: f64,
    bler_target: f64,
    slope_db: f64,
) -> &'t McsEntry {
    assert!(!table.is_empty());
    table
        .iter()
        .rev()
        .find(|m| bler(sinr_db, m, slope_db) <= bler_target)
        .unwrap_or(&table[0])
}

/// Transport block payload in bits: usable resource elements after overhead,
/// floored, times spectral efficiency, floored.
pub fn tb_capacity(prb_count: u16, mcs: &McsEntry, overhead: f64) -> u64 {
    assert!(prb_count >= 1, "tb_capacity needs at least one PRB");
    let res = (prb_count as u64 * PRB_SUBCARRIERS * SYMBOLS_PER_TTI) as f64;
    let usable = (res * (1.0 - overhead)).floor();
    (usable * mcs.spectral_eff).floor() as u64
}

/// Bernoulli decode outcome at the given SINR.
pub fn decode(cfg: &RadioConfig, sinr_db: f64, mcs: &McsEntry, rng: &mut RngStream) -> bool {
    if cfg.force_bler_zero {
        return true;
    }
    let p_err = match cfg.force_bler {
        Some(p) => p,
        None => bler(sinr_db, mcs, cfg.bler_slope_db),
    };
    !rng.bernoulli(p_err)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> RadioConfig {
        RadioConfig::default()
    }

    fn geom() -> CellGeometry {
        CellGeometry {
            gnb: Position::new(7.5, 7.5, 10.0),
            sector_azimuths_deg: [0.0, 120.0, 240.0],
        }
    }

    #[test]
    fn path_loss_at_ten_meters_matches_hand_value() {
        let cfg = cfg();
        let a = Position::new(0.0, 0.0, 0.0);
        let b = Position::new(10.0, 0.0, 0.0);
        // PL0 = 31.84 + 19 log10(2.6) = 39.72, plus 21.5 dB per decade.
        assert!((path_loss_db(&cfg, &a, &b) - 61.22).abs() < 0.01);
    }

    #[test]
    fn path_loss_at_one_meter_is_pl0() {
        let cfg = cfg();
        let a = Position::new(0.0, 0.0, 0.0);
        let b = Position::new(1.0, 0.0, 0.0);
        assert!((path_loss_db(&cfg, &a, &b) - 39.72).abs() < 0.01);
    }

    #[test]
    fn blockage_penalty_is_additive() {
        let cfg = cfg();
        let link = SectorLink {
            path_loss_db: 61.22,
            pattern_db: 0.0,
            shadowing_db: 0.0,
            blocked: true,
        };
        assert!((link.gain_db(&cfg) - (-76.22)).abs() < 0.01);
        let clear = SectorLink {
            blocked: false,
            ..link
        };
        assert!((clear.gain_db(&cfg) - (-61.22)).abs() < 0.01);
    }

    #[test]
    fn zero_distance_clamps() {
        let cfg = cfg();
        let p = Position::new(1.0, 1.0, 1.0);
        let pl = path_loss_db(&cfg, &p, &p);
        assert!((pl - (cfg.pl0_db + 10.0 * cfg.path_loss_exponent * 0.1f64.log10())).abs() < 1e-9);
    }

    #[test]
    fn path_loss_is_symmetric() {
        let cfg = cfg();
        let a = Position::new(1.0, 2.0, 3.0);
        let b = Position::new(9.0, 4.0, 1.5);
        assert_eq!(path_loss_db(&cfg, &a, &b), path_loss_db(&cfg, &b, &a));
    }

    #[test]
    fn boresight_device_gets_its_sector() {
        let cfg = cfg();
        let g = geom();
        // Due east of the gNB = bearing 0 = sector 0 boresight.
        let device = Position::new(12.5, 7.5, 1.5);
        assert_eq!(assign_cell(&cfg, &g, &device), 0);
    }

    #[test]
    fn equidistant_bearing_ties_break_low() {
        let cfg = cfg();
        let g = geom();
        // Bearing 60 degrees: halfway between boresights 0 and 120.
        let bearing: f64 = 60.0_f64.to_radians();
        let device = Position::new(7.5 + 5.0 * bearing.cos(), 7.5 + 5.0 * bearing.sin(), 1.5);
        assert_eq!(assign_cell(&cfg, &g, &device), 0);
    }

    #[test]
    fn random_placement_fills_every_sector() {
        let cfg = cfg();
        let g = geom();
        let mut rng = RngStream::new(11, "placement-test");
        let mut counts = [0u32; 3];
        for _ in 0..100 {
            let p = Position::new(rng.range(0.0, 15.0), rng.range(0.0, 15.0), 1.5);
            counts[assign_cell(&cfg, &g, &p)] += 1;
        }
        assert!(counts.iter().all(|&c| c > 0), "counts {counts:?}");
    }

    #[test]
    fn sinr_without_interference_is_snr() {
        let s = dbm_to_mw(-90.0);
        let n = dbm_to_mw(-100.0);
        assert!((sinr_db(s, n, 0.0) - 10.0).abs() < 1e-9);
    }

    #[test]
    fn interferer_at_noise_power_costs_three_db() {
        let s = dbm_to_mw(-90.0);
        let n = dbm_to_mw(-100.0);
        let clean = sinr_db(s, n, 0.0);
        let hit = sinr_db(s, n, n);
        assert!((clean - hit - 3.0103).abs() < 0.001);
    }

    #[test]
    fn disjoint_prbs_do_not_interfere() {
        assert_eq!(prb_overlap(0, 10, 10, 20), 0);
        assert_eq!(prb_overlap(0, 10, 5, 20), 5);
        assert_eq!(prb_overlap(0, 30, 5, 10), 10);
    }

    #[test]
    fn mcs_table_is_strictly_increasing() {
        let table = default_mcs_table();
        assert_eq!(table.len(), 15);
        for w in table.windows(2) {
            assert!(w[1].spectral_eff > w[0].spectral_eff);
            assert!(w[1].snr50_db > w[0].snr50_db);
        }
        assert_eq!(table[0].index, 1);
        assert_eq!(table[14].index, 15);
    }

    #[test]
    fn high_sinr_selects_top_entry() {
        let table = default_mcs_table();
        assert_eq!(select_mcs(&table, 1e6, 0.1, 0.5).index, 15);
    }

    #[test]
    fn low_sinr_falls_back_to_entry_one() {
        let table = default_mcs_table();
        assert_eq!(select_mcs(&table, -1e6, 0.1, 0.5).index, 1);
    }

    #[test]
    fn sinr_at_midpoint_selects_lower_entry() {
        let table = default_mcs_table();
        let snr50_7 = table[6].snr50_db;
        let picked = select_mcs(&table, snr50_7, 0.1, 0.5);
        assert!(picked.index < 7, "picked {}", picked.index);
    }

    #[test]
    fn selection_is_monotone_in_sinr() {
        let table = default_mcs_table();
        let mut prev = 0;
        let mut s = -12.0;
        while s < 25.0 {
            let idx = select_mcs(&table, s, 0.1, 0.5).index;
            assert!(idx >= prev);
            prev = idx;
            s += 0.25;
        }
    }

    #[test]
    fn tb_capacity_matches_hand_values() {
        let m2 = McsEntry {
            index: 9,
            spectral_eff: 2.0,
            snr50_db: 0.0,
        };
        assert_eq!(tb_capacity(10, &m2, 0.14), 2888);
        let m1 = McsEntry {
            index: 6,
            spectral_eff: 1.0,
            snr50_db: 0.0,
        };
        assert_eq!(tb_capacity(1, &m1, 0.14), 144);
    }

    #[test]
    #[should_panic(expected = "at least one PRB")]
    fn tb_capacity_rejects_zero_prbs() {
        let m = default_mcs_table()[0];
        tb_capacity(0, &m, 0.14);
    }

    #[test]
    fn tb_capacity_is_monotone() {
        let table = default_mcs_table();
        for prbs in 1..=106u16 {
            for pair in table.windows(2) {
                assert!(
                    tb_capacity(prbs, &pair[1], 0.14) >= tb_capacity(prbs, &pair[0], 0.14)
                );
            }
        }
        for m in &table {
            for prbs in 1..106u16 {
                assert!(tb_capacity(prbs + 1, m, 0.14) >= tb_capacity(prbs, m, 0.14));
            }
        }
    }

    #[test]
    fn bler_is_half_at_midpoint_and_decreasing() {
        let m = default_mcs_table()[7];
        assert!((bler(m.snr50_db, &m, 0.5) - 0.5).abs() < 1e-12);
        assert!((bler(m.snr50_db + 2.0, &m, 0.5) - 0.0180).abs() < 1e-4);
        let mut prev = 1.0;
        let mut s = m.snr50_db - 10.0;
        while s < m.snr50_db + 10.0 {
            let b = bler(s, &m, 0.5);
            assert!(b < prev);
            prev = b;
            s += 0.5;
        }
    }

    #[test]
    fn empirical_error_rate_matches_bler() {
        let cfg = cfg();
        let m = default_mcs_table()[7];
        let sinr = m.snr50_db + 2.0;
        let p = bler(sinr, &m, cfg.bler_slope_db);
        let mut rng = RngStream::new(5, "decode-test");
        let n = 100_000;
        let failures = (0..n)
            .filter(|_| !decode(&cfg, sinr, &m, &mut rng))
            .count() as f64;
        let sigma = (p * (1.0 - p) / n as f64).sqrt();
        assert!(
            (failures / n as f64 - p).abs() < 3.0 * sigma,
            "rate {} expected {}",
            failures / n as f64,
            p
        );
    }

    #[test]
    fn forced_bler_zero_always_decodes() {
        let mut cfg = cfg();
        cfg.force_bler_zero = true;
        let m = default_mcs_table()[0];
        let mut rng = RngStream::new(5, "decode-test");
        assert!((0..1000).all(|_| decode(&cfg, -50.0, &m, &mut rng)));
    }

    #[test]
    fn link_draws_are_stable_for_same_streams() {
        let cfg = cfg();
        let g = geom();
        let p = Position::new(3.0, 12.0, 1.5);
        let mk = || {
            let mut sh = RngStream::new(9, "shadowing");
            let mut bl = RngStream::new(9, "blockage");
            build_link(&cfg, &g, 4, &p, &mut sh, &mut bl)
        };
        let a = mk();
        let b = mk();
        for s in 0..3 {
            assert_eq!(a.sectors[s].shadowing_db, b.sectors[s].shadowing_db);
            assert_eq!(a.sectors[s].blocked, b.sectors[s].blocked);
        }
        assert_eq!(a.serving_cell, b.serving_cell);
    }
}
