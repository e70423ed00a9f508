//! Named parameter sets for the mirror and the two switching schemes.

use super::config::{Frequency, RunConfig, SchemeKind};
use crate::error::{Error, Result};

pub const PRESETS: [&str; 5] = ["fig1", "fig3-empty", "fig3-photon", "fig4-empty", "fig4-photon"];

/// Collective resonance shift Δ of the ordered 532 nm array, in units of Γ_e.
pub const COLLECTIVE_SHIFT: f64 = 0.172;

/// Γ_e of the default species in units of 2π×MHz.
const GAMMA_E_MHZ: f64 = 6.0;

pub fn preset(name: &str) -> Result<RunConfig> {
    let mut c = RunConfig::default();
    match name {
        "fig1" => {}
        "fig3-empty" | "fig3-photon" => {
            let s = &mut c.scheme;
            s.kind = SchemeKind::FourLevel;
            s.drive_rabi = Frequency::Mhz(2.0);
            s.drive_detuning = Frequency::Gamma(-COLLECTIVE_SHIFT);
            s.cavity_coupling = Frequency::Mhz(2.0);
            s.cavity_detuning = Frequency::Mhz(0.0);
            s.gamma_s = Frequency::Gamma(1e-3);
            s.gamma_r = Frequency::Gamma(1e-3);
            s.photon_number = u32::from(name == "fig3-photon");
        }
        "fig4-empty" | "fig4-photon" => {
            let s = &mut c.scheme;
            s.kind = SchemeKind::FourLevel;
            s.drive_rabi = Frequency::Mhz(4.0);
            s.drive_detuning = Frequency::Mhz(-20.0);
            s.cavity_coupling = Frequency::Mhz(4.0);
            // Δ_c = −Δ_d − Δ
            s.cavity_detuning = Frequency::Mhz(20.0 - COLLECTIVE_SHIFT * GAMMA_E_MHZ);
            s.gamma_s = Frequency::Gamma(1e-3);
            s.gamma_r = Frequency::Gamma(1e-3);
            s.photon_number = u32::from(name == "fig4-photon");
        }
        _ => {
            return Err(Error::UnknownPreset { name: name.to_owned(), available: PRESETS.join(", ") });
        }
    }
    c.preset = Some(name.to_owned());
    Ok(c)
}
