use cloudedge::pid::{pid_step, PidConfig, PidGains, PidState};
use cloudedge::plant::{ActuatorCommand, ActuatorLevel, Boiler, Disturbance, NoiseConfig, PlantConfig, CONTROL_PERIOD_S};
use proptest::prelude::*;

/// Level loop alone: the valve stays at its nominal opening so the pressure
/// loop cannot starve the drum of steam flow.
#[test]
fn level_step_settles_within_two_percent_in_100_steps() {
    let plant = PlantConfig {
        noise: NoiseConfig::quiet(),
        ..PlantConfig::default()
    };
    let boiler = Boiler::new(plant);
    let gains = PidConfig::default().level;
    let target = 0.6;
    let mut st = PidState::default();
    let mut s = boiler.nominal();
    let mut levels = Vec::new();
    for _ in 0..300 {
        let (u, next) = pid_step(&gains, &st, target, s.water_level, CONTROL_PERIOD_S);
        st = next;
        let cmd = ActuatorCommand {
            pump: ActuatorLevel::quantize(u),
            valve: ActuatorLevel::Half,
        };
        let out = boiler.step(&s, cmd, CONTROL_PERIOD_S, &Disturbance::NONE);
        assert!(!out.failed);
        s = out.state;
        levels.push(s.water_level);
    }
    let band = 0.02 * target;
    let settle = levels
        .iter()
        .rposition(|l| (l - target).abs() > band)
        .map_or(0, |k| k + 1);
    assert!(settle <= 100, "settled after {settle} steps; tail {:?}", &levels[290..]);
}

fn gains() -> impl Strategy<Value = PidGains> {
    (0.0f64..5.0, 0.0f64..1.0, 0.0f64..2.0, -3.0f64..0.0, 0.1f64..3.0, 0.1f64..10.0).prop_map(
        |(kp, ki, kd, lo, width, clamp)| PidGains {
            kp,
            ki,
            kd,
            out_lo: lo,
            out_hi: lo + width,
            integral_clamp: clamp,
            bias: 0.0,
        },
    )
}

proptest! {
    #[test]
    fn output_and_integral_stay_bounded(g in gains(), errors in prop::collection::vec(-10.0f64..10.0, 1..100)) {
        let mut st = PidState::default();
        for e in errors {
            let (out, next) = pid_step(&g, &st, e, 0.0, 5.0);
            prop_assert!(out >= g.out_lo && out <= g.out_hi);
            prop_assert!(next.integral.abs() <= g.integral_clamp);
            st = next;
        }
    }

    #[test]
    fn zero_gains_give_zero_output(errors in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let g = PidGains { kp: 0.0, ki: 0.0, kd: 0.0, out_lo: -1.0, out_hi: 1.0, integral_clamp: 1.0, bias: 0.0 };
        let mut st = PidState::default();
        for e in errors {
            let (out, next) = pid_step(&g, &st, e, 0.0, 5.0);
            prop_assert_eq!(out, 0.0);
            st = next;
        }
    }

    #[test]
    fn identical_error_sequences_give_identical_outputs(g in gains(), errors in prop::collection::vec(-10.0f64..10.0, 1..50)) {
        let run = || {
            let mut st = PidState::default();
            errors.iter().map(|&e| {
                let (out, next) = pid_step(&g, &st, e, 0.0, 5.0);
                st = next;
                out
            }).collect::<Vec<_>>()
        };
        prop_assert_eq!(run(), run());
    }
}
