//! Intracellular kinetics: constitutive LuxI in senders, the AHL-biased
//! LacI/TetR toggle in receivers, and intracellular AHL turnover.

use serde::{Deserialize, Serialize};

use crate::types::{CellKind, ReceiverParams, SenderParams, SignalParams};

/// `dLuxI/dt = a_s - γ_s·LuxI`.
pub fn sender_rate(x: &[f64], p: &SenderParams) -> [f64; 1] {
    [p.a_s - p.gamma_s * x[0]]
}

/// LacI is repressed by TetR; TetR is activated by AHL and repressed by LacI.
pub fn receiver_rate(x: &[f64], u: f64, p: &ReceiverParams) -> [f64; 2] {
    let (laci, tetr) = (x[0], x[1]);
    let k1 = p.k1 * p.k1;
    let k2 = p.k2 * p.k2;
    let ku = p.k_u * p.k_u;
    let u2 = u * u;
    let d_laci = p.a_r1 * k2 / (k2 + tetr * tetr) - p.gamma_r1 * laci;
    let d_tetr = p.a_r2 * (u2 / (ku + u2) + k1 / (k1 + laci * laci)) - p.gamma_r2 * tetr;
    [d_laci, d_tetr]
}

/// `du/dt = a_u·y - γ_u·u + α·(v - u)`.
pub fn signal_rate(u: f64, y: f64, v_local: f64, p: &SignalParams) -> f64 {
    p.a_u * y - p.gamma_u * u + p.alpha * (v_local - u)
}

/// Writes `f(x_i, u_i)` for one cell into `out`.
pub fn cell_rate(
    kind: CellKind,
    x: &[f64],
    u: f64,
    sender: &SenderParams,
    receiver: &ReceiverParams,
    out: &mut [f64],
) {
    match kind {
        CellKind::Sender => out.copy_from_slice(&sender_rate(x, sender)),
        CellKind::Receiver => out.copy_from_slice(&receiver_rate(x, u, receiver)),
    }
}

/// A complete kinetic parameter set plus the physical constants that go
/// with it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KineticPreset {
    pub signal: SignalParams,
    pub sender: SenderParams,
    pub receiver: ReceiverParams,
    pub cell_radius: f64,
    pub diffusivity: f64,
}

pub const PAPER_SEC4: &str = "paper-sec4";

/// The sender/receiver circuit parameters used by the bundled scenarios.
///
/// The published list names its constants `a_1..a_3, g_1..g_A, K_2..K_4`
/// without tying them to the rate laws. Production and degradation rates are
/// unambiguous; the dissociation constants are assigned as `K_2 = 10` (TetR
/// on LacI), `K_1 = 50` (LacI on TetR) and `K_u = 50` (AHL on TetR). Of the
/// possible assignments this is the one under which a lone distant sender
/// and the slab layout leave the receiver OFF while the 40 µm shell of
/// senders switches it ON.
pub fn paper_sec4() -> KineticPreset {
    KineticPreset {
        signal: SignalParams {
            alpha: 1.0,
            a_u: 2.0,
            gamma_u: 0.01,
        },
        sender: SenderParams {
            a_s: 5.0,
            gamma_s: 0.01,
        },
        receiver: ReceiverParams {
            a_r1: 5.0,
            a_r2: 2.5,
            gamma_r1: 0.01,
            gamma_r2: 0.01,
            k1: 50.0,
            k2: 10.0,
            k_u: 50.0,
        },
        cell_radius: 1.5,
        diffusivity: 2.0e4,
    }
}

pub fn preset(name: &str) -> Option<KineticPreset> {
    (name == PAPER_SEC4).then(paper_sec4)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toggle(k1: f64, k2: f64, k_u: f64) -> ReceiverParams {
        ReceiverParams {
            a_r1: 5.0,
            a_r2: 2.5,
            gamma_r1: 0.01,
            gamma_r2: 0.01,
            k1,
            k2,
            k_u,
        }
    }

    #[test]
    fn sender_fixed_point_and_arithmetic() {
        let p = SenderParams {
            a_s: 5.0,
            gamma_s: 0.01,
        };
        assert_eq!(sender_rate(&[500.0], &p)[0], 0.0);
        assert!((sender_rate(&[400.0], &p)[0] - 1.0).abs() < 1e-12);
        assert_eq!(sender_rate(&[0.0], &p)[0], 5.0);
    }

    #[test]
    fn receiver_arithmetic_example() {
        let p = toggle(50.0, 50.0, 10.0);
        let [dl, dt] = receiver_rate(&[300.0, 1.0], 0.0, &p);
        let want_l = 5.0 * 2500.0 / 2501.0 - 3.0;
        let want_t = 2.5 * 2500.0 / 92500.0 - 0.01;
        assert!((dl - want_l).abs() < 1e-12 && (dl - 1.998).abs() < 1e-3);
        assert!((dt - want_t).abs() < 1e-12 && (dt - 0.0576).abs() < 1e-4);
    }

    #[test]
    fn receiver_hill_limits() {
        let p = toggle(50.0, 50.0, 10.0);
        // u = 0 and LacI huge: both TetR activation terms vanish.
        let [_, dt] = receiver_rate(&[1e12, 7.0], 0.0, &p);
        assert!((dt + 0.07).abs() < 1e-9);
        // u huge and LacI = 0: both terms saturate at 1.
        let [_, dt] = receiver_rate(&[0.0, 7.0], 1e12, &p);
        assert!((dt - (2.5 * 2.0 - 0.07)).abs() < 1e-9);
    }

    #[test]
    fn signal_rate_cases() {
        let p = SignalParams {
            alpha: 1.0,
            a_u: 2.0,
            gamma_u: 0.0,
        };
        assert_eq!(signal_rate(3.0, 0.0, 3.0, &p), 0.0);
        let p = SignalParams {
            alpha: 1.0,
            a_u: 2.0,
            gamma_u: 0.01,
        };
        assert!((signal_rate(0.0, 400.0, 0.0, &p) - 800.0).abs() < 1e-12);
        let ustar = p.a_u * 400.0 / (p.alpha + p.gamma_u);
        assert!(signal_rate(ustar, 400.0, 0.0, &p).abs() < 1e-10);
    }

    #[test]
    fn rates_nonnegative_on_orthant_faces() {
        let p = paper_sec4();
        for &other in &[0.0, 1.0, 50.0, 1e4] {
            for &u in &[0.0, 3.0, 1e3] {
                assert!(receiver_rate(&[0.0, other], u, &p.receiver)[0] >= 0.0);
                assert!(receiver_rate(&[other, 0.0], u, &p.receiver)[1] >= 0.0);
            }
        }
        assert!(sender_rate(&[0.0], &p.sender)[0] >= 0.0);
    }

    #[test]
    fn preset_lookup() {
        assert_eq!(preset("paper-sec4"), Some(paper_sec4()));
        assert!(preset("nope").is_none());
    }
}
