use serde::{Deserialize, Serialize};

/// First-order radio model. Energies are tracked in integer picojoules so
/// that debits add up exactly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RadioModel {
    /// Electronics cost, J/bit.
    pub e_elec: f64,
    /// Amplifier cost, J/bit/m².
    pub eps_amp: f64,
}

impl Default for RadioModel {
    fn default() -> Self {
        Self {
            e_elec: 50e-9,
            eps_amp: 100e-12,
        }
    }
}

pub const PJ_PER_J: f64 = 1e12;

pub fn joules_to_pj(j: f64) -> u64 {
    (j * PJ_PER_J).round().max(0.0) as u64
}

pub fn pj_to_joules(pj: u64) -> f64 {
    pj as f64 / PJ_PER_J
}

impl RadioModel {
    /// E_tx = E_elec·b + ε_amp·b·d²
    pub fn energy_tx(&self, bits: u64, distance_m: f64) -> f64 {
        let b = bits as f64;
        self.e_elec * b + self.eps_amp * b * distance_m * distance_m
    }

    /// E_rx = E_elec·b
    pub fn energy_rx(&self, bits: u64) -> f64 {
        self.e_elec * bits as f64
    }

    pub fn tx_pj(&self, bits: u64, distance_m: f64) -> u64 {
        joules_to_pj(self.energy_tx(bits, distance_m))
    }

    pub fn rx_pj(&self, bits: u64) -> u64 {
        joules_to_pj(self.energy_rx(bits))
    }
}

pub fn energy_tx(bits: u64, distance_m: f64) -> f64 {
    RadioModel::default().energy_tx(bits, distance_m)
}

pub fn energy_rx(bits: u64) -> f64 {
    RadioModel::default().energy_rx(bits)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_values() {
        assert_eq!(energy_tx(0, 100.0), 0.0);
        assert!((energy_tx(1000, 0.0) - 5.0e-5).abs() < 1e-18);
        // 1000 bits over 10 m: 5e-5 + 1e-10*1000*100
        assert!((energy_tx(1000, 10.0) - 6.0e-5).abs() < 1e-18);
        assert!((energy_rx(1000) - 5.0e-5).abs() < 1e-18);
    }

    #[test]
    fn tx_dominates_rx() {
        for d in [0.0, 0.5, 3.0, 1000.0] {
            assert!(energy_tx(4096, d) >= energy_rx(4096));
        }
    }

    #[test]
    fn picojoule_conversion() {
        assert_eq!(joules_to_pj(12.5), 12_500_000_000_000);
        assert_eq!(RadioModel::default().rx_pj(1000), 50_000_000);
    }
}
