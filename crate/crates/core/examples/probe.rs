use diffnet_core::analysis::*;
use diffnet_core::field::*;
use diffnet_core::reduced::*;
use diffnet_core::scenario::presets::bundled;
use diffnet_core::scenario::{Overrides, Scenario};

fn main() {
    let s = Scenario::parse(bundled("paper-4-1").unwrap(), Overrides::default()).unwrap();
    for gamma in [0.1, 0.01] {
        let spec = with_degradation(&s.spec, gamma);
        let red = simulate_reduced(&spec, 200.0, 1.0, &ReducedSettings::default()).unwrap();
        let sp = [Species { cell: 1, index: 0 }, Species { cell: 1, index: 1 }];
        for dt in [5e-3, 2.5e-3] {
            let full = simulate_full(&spec, &FullSettings { dt, ..Default::default() }, 200.0, 1.0).unwrap();
            let e = max_abs_error(&full.trajectory, &red, &sp).unwrap();
            let ur = full.trajectory.signals.iter().map(|u| u[1]).fold(0.0, f64::max);
            println!("gamma {gamma} dt {dt}: errors {:.4e} {:.4e}; max receiver u {ur:.3e}", e[0], e[1]);
        }
    }
}
