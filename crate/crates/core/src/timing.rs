//! Timed deterministic-assumption checking for real deployments: given
//! per-action start/end times and a worst-case network latency bound, every
//! receive must start strictly after its predecessor sends (plus latency)
//! have finished on all machines, and finish strictly before any successor
//! send starts. Also synthesizes schedules that separate sends from receives
//! by a latency window.

use crate::pattern::{ActionKind, Pattern};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use thiserror::Error;

/// Execution window of one action on one machine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleSlot {
    pub start: f64,
    pub end: f64,
}

/// A timed schedule for one period: `slots[machine][position]`, the network
/// latency bound, and the period length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimedSchedule {
    pub slots: Vec<Vec<ScheduleSlot>>,
    pub tau_net: f64,
    pub period: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScheduleError {
    #[error("schedule covers {got} machines, pattern has {want}")]
    MachineCount { got: usize, want: usize },
    #[error("machine {machine}: schedule covers {got} actions, pattern has {want}")]
    ActionCount {
        machine: usize,
        got: usize,
        want: usize,
    },
    #[error("machine {machine} position {position}: start {start} after end {end}")]
    BackwardsSlot {
        machine: usize,
        position: usize,
        start: f64,
        end: f64,
    },
    #[error("machine {machine}: positions {earlier} and {later} overlap or are out of order")]
    Unordered {
        machine: usize,
        earlier: usize,
        later: usize,
    },
    #[error("machine {machine} position {position} lies outside [0, {period})")]
    OutsidePeriod {
        machine: usize,
        position: usize,
        period: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DaViolationKind {
    /// A predecessor send's message may still be in flight when the receive
    /// starts.
    PredecessorSend,
    /// A successor send may overtake the receive.
    SuccessorSend,
}

/// One violated strict inequality `lhs < rhs`, with the machines and
/// positions that produce it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DaViolation {
    pub kind: DaViolationKind,
    pub send_machine: usize,
    pub send_position: usize,
    pub receive_machine: usize,
    pub receive_position: usize,
    pub lhs: f64,
    pub rhs: f64,
}

impl DaViolation {
    /// By how much the inequality fails (nonnegative for violations).
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

impl fmt::Display for DaViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            DaViolationKind::PredecessorSend => write!(
                f,
                "send #{} on machine {} ends too late: end + tau_net = {:.3} !< {:.3} = start of receive #{} on machine {} (slack {:.3})",
                self.send_position + 1,
                self.send_machine + 1,
                self.lhs,
                self.rhs,
                self.receive_position + 1,
                self.receive_machine + 1,
                self.slack()
            ),
            DaViolationKind::SuccessorSend => write!(
                f,
                "receive #{} on machine {} ends too late: end = {:.3} !< {:.3} = start of send #{} on machine {} (slack {:.3})",
                self.receive_position + 1,
                self.receive_machine + 1,
                self.lhs,
                self.rhs,
                self.send_position + 1,
                self.send_machine + 1,
                self.slack()
            ),
        }
    }
}

fn validate(schedule: &TimedSchedule, pattern: &Pattern) -> Result<(), ScheduleError> {
    if schedule.slots.len() != pattern.n {
        return Err(ScheduleError::MachineCount {
            got: schedule.slots.len(),
            want: pattern.n,
        });
    }
    for (machine, slots) in schedule.slots.iter().enumerate() {
        if slots.len() != pattern.actions.len() {
            return Err(ScheduleError::ActionCount {
                machine,
                got: slots.len(),
                want: pattern.actions.len(),
            });
        }
        for (position, slot) in slots.iter().enumerate() {
            if slot.start > slot.end {
                return Err(ScheduleError::BackwardsSlot {
                    machine,
                    position,
                    start: slot.start,
                    end: slot.end,
                });
            }
            if slot.start < 0.0 || slot.end >= schedule.period {
                return Err(ScheduleError::OutsidePeriod {
                    machine,
                    position,
                    period: schedule.period,
                });
            }
        }
        for position in 1..slots.len() {
            if slots[position - 1].end > slots[position].start {
                return Err(ScheduleError::Unordered {
                    machine,
                    earlier: position - 1,
                    later: position,
                });
            }
        }
    }
    Ok(())
}

/// Checks the timed deterministic assumption. Empty report iff for every
/// receive, every machine pair, its immediate predecessor send satisfies
/// `send.end + tau_net < receive.start` and its immediate successor send
/// satisfies `receive.end < send.start`.
pub fn check_da_timed(
    schedule: &TimedSchedule,
    pattern: &Pattern,
) -> Result<Vec<DaViolation>, ScheduleError> {
    validate(schedule, pattern)?;
    let n = pattern.n;
    let actions = &pattern.actions;
    let mut violations = Vec::new();
    for (beta, action) in actions.iter().enumerate() {
        if action.kind() != ActionKind::Receive {
            continue;
        }
        let var = action.var();
        let predecessor = actions[..beta]
            .iter()
            .rposition(|a| a.kind() == ActionKind::Send && a.var() == var);
        let successor = actions[beta + 1..]
            .iter()
            .position(|a| a.kind() == ActionKind::Send && a.var() == var)
            .map(|offset| beta + 1 + offset);
        for receiver in 0..n {
            let recv = schedule.slots[receiver][beta];
            if let Some(alpha) = predecessor {
                for sender in 0..n {
                    let send = schedule.slots[sender][alpha];
                    let lhs = send.end + schedule.tau_net;
                    if lhs >= recv.start {
                        violations.push(DaViolation {
                            kind: DaViolationKind::PredecessorSend,
                            send_machine: sender,
                            send_position: alpha,
                            receive_machine: receiver,
                            receive_position: beta,
                            lhs,
                            rhs: recv.start,
                        });
                    }
                }
            }
            if let Some(gamma) = successor {
                for sender in 0..n {
                    let send = schedule.slots[sender][gamma];
                    if recv.end >= send.start {
                        violations.push(DaViolation {
                            kind: DaViolationKind::SuccessorSend,
                            send_machine: sender,
                            send_position: gamma,
                            receive_machine: receiver,
                            receive_position: beta,
                            lhs: recv.end,
                            rhs: send.start,
                        });
                    }
                }
            }
        }
    }
    Ok(violations)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SynthesisError {
    #[error("array `{0}` is sent more than once; window scheduling needs unique sends")]
    DuplicateSends(String),
    #[error("action budget exceeds the period: need more than {need:.3} time units, period is {period:.3}")]
    Infeasible { need: f64, period: f64 },
}

/// Synthesizes a schedule that guards every receive behind a latency window:
/// actions run in program order in aligned slots on all machines, and a
/// receive never starts within `tau_net` of the latest preceding send's end.
/// Requires that no array is sent twice.
pub fn synthesize_window_schedule(
    pattern: &Pattern,
    tau_net: f64,
    period: f64,
) -> Result<TimedSchedule, SynthesisError> {
    let mut seen_sends = BTreeSet::new();
    for action in &pattern.actions {
        if action.kind() == ActionKind::Send && !seen_sends.insert(action.var()) {
            return Err(SynthesisError::DuplicateSends(
                pattern.var_name(action.var()).to_string(),
            ));
        }
    }
    let k = pattern.actions.len();
    if k == 0 {
        return Ok(TimedSchedule {
            slots: vec![Vec::new(); pattern.n],
            tau_net,
            period,
        });
    }
    let receives = pattern
        .actions
        .iter()
        .filter(|a| a.kind() == ActionKind::Receive)
        .count() as f64;
    let budget = period - receives * tau_net;
    if budget <= 0.0 {
        return Err(SynthesisError::Infeasible {
            need: receives * tau_net,
            period,
        });
    }
    let delta = budget / (2.0 * (2.0 * k as f64 + receives));
    let mut slots = Vec::with_capacity(k);
    let mut t = 0.0f64;
    let mut last_send_end = f64::NEG_INFINITY;
    for action in &pattern.actions {
        if action.kind() == ActionKind::Receive {
            t = t.max(last_send_end + tau_net + delta);
        }
        let slot = ScheduleSlot {
            start: t,
            end: t + delta,
        };
        if action.kind() == ActionKind::Send {
            last_send_end = slot.end;
        }
        slots.push(slot);
        t = slot.end + delta;
    }
    let span = slots.last().expect("k > 0").end;
    if span >= period {
        return Err(SynthesisError::Infeasible { need: span, period });
    }
    Ok(TimedSchedule {
        slots: vec![slots; pattern.n],
        tau_net,
        period,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pattern::Pattern;

    fn fig2_pattern(n: usize) -> Pattern {
        let mut p = Pattern::new(n, vec!["a".into()], vec!["e".into()]).unwrap();
        p.push_action("a[x] <- e").unwrap();
        p.push_action("send(a[x])").unwrap();
        p.push_action("receive(a)").unwrap();
        p
    }

    fn uniform(slots: Vec<ScheduleSlot>, n: usize, tau_net: f64, period: f64) -> TimedSchedule {
        TimedSchedule {
            slots: vec![slots; n],
            tau_net,
            period,
        }
    }

    #[test]
    fn window_schedule_has_no_violations() {
        // sends end by 3, latency 2, receives start at 6
        let p = fig2_pattern(3);
        let schedule = uniform(
            vec![
                ScheduleSlot {
                    start: 0.0,
                    end: 1.0,
                },
                ScheduleSlot {
                    start: 2.0,
                    end: 3.0,
                },
                ScheduleSlot {
                    start: 6.0,
                    end: 7.0,
                },
            ],
            3,
            2.0,
            10.0,
        );
        assert!(check_da_timed(&schedule, &p).unwrap().is_empty());
    }

    #[test]
    fn receive_at_the_window_boundary_violates_strictly() {
        let p = fig2_pattern(2);
        let schedule = uniform(
            vec![
                ScheduleSlot {
                    start: 0.0,
                    end: 1.0,
                },
                ScheduleSlot {
                    start: 2.0,
                    end: 3.0,
                },
                ScheduleSlot {
                    start: 5.0,
                    end: 6.0,
                }, // 3 + 2 = 5, not strictly before
            ],
            2,
            2.0,
            10.0,
        );
        let violations = check_da_timed(&schedule, &p).unwrap();
        assert_eq!(violations.len(), 4, "each sender against each receiver");
        for v in &violations {
            assert_eq!(v.kind, DaViolationKind::PredecessorSend);
            assert_eq!(v.slack(), 0.0);
        }
    }

    #[test]
    fn successor_send_must_wait_for_the_receive() {
        // receive then a later send of the same array
        let mut p = Pattern::new(2, vec!["a".into()], vec![]).unwrap();
        p.push_action("receive(a)").unwrap();
        p.push_action("send(a[x])").unwrap();
        let good = uniform(
            vec![
                ScheduleSlot {
                    start: 0.0,
                    end: 1.0,
                },
                ScheduleSlot {
                    start: 2.0,
                    end: 3.0,
                },
            ],
            2,
            0.5,
            10.0,
        );
        assert!(check_da_timed(&good, &p).unwrap().is_empty());
        let bad = uniform(
            vec![
                ScheduleSlot {
                    start: 0.0,
                    end: 2.0,
                },
                ScheduleSlot {
                    start: 2.0,
                    end: 3.0,
                }, // send starts as receive ends
            ],
            2,
            0.5,
            10.0,
        );
        let violations = check_da_timed(&bad, &p).unwrap();
        assert!(violations
            .iter()
            .all(|v| v.kind == DaViolationKind::SuccessorSend));
        assert_eq!(violations.len(), 4);
    }

    #[test]
    fn malformed_schedules_are_model_errors() {
        let p = fig2_pattern(2);
        let missing = TimedSchedule {
            slots: vec![
                vec![
                    ScheduleSlot {
                        start: 0.0,
                        end: 1.0
                    };
                    2
                ];
                2
            ],
            tau_net: 1.0,
            period: 10.0,
        };
        assert!(matches!(
            check_da_timed(&missing, &p),
            Err(ScheduleError::ActionCount { .. })
        ));
        let backwards = uniform(
            vec![
                ScheduleSlot {
                    start: 2.0,
                    end: 1.0,
                },
                ScheduleSlot {
                    start: 3.0,
                    end: 4.0,
                },
                ScheduleSlot {
                    start: 5.0,
                    end: 6.0,
                },
            ],
            2,
            1.0,
            10.0,
        );
        assert!(matches!(
            check_da_timed(&backwards, &p),
            Err(ScheduleError::BackwardsSlot { .. })
        ));
        let outside = uniform(
            vec![
                ScheduleSlot {
                    start: 0.0,
                    end: 1.0,
                },
                ScheduleSlot {
                    start: 3.0,
                    end: 4.0,
                },
                ScheduleSlot {
                    start: 5.0,
                    end: 11.0,
                },
            ],
            2,
            1.0,
            10.0,
        );
        assert!(matches!(
            check_da_timed(&outside, &p),
            Err(ScheduleError::OutsidePeriod { .. })
        ));
    }

    /// Direct evaluation of the inequalities over all send/receive position
    /// pairs (not just immediate neighbours), as an independent oracle.
    fn oracle_violated_receives(
        schedule: &TimedSchedule,
        pattern: &Pattern,
    ) -> BTreeSet<(usize, usize)> {
        let n = pattern.n;
        let mut bad = BTreeSet::new();
        for (beta, action) in pattern.actions.iter().enumerate() {
            if action.kind() != ActionKind::Receive {
                continue;
            }
            for receiver in 0..n {
                let recv = schedule.slots[receiver][beta];
                for (pos, other) in pattern.actions.iter().enumerate() {
                    if other.kind() != ActionKind::Send || other.var() != action.var() {
                        continue;
                    }
                    for sender in 0..n {
                        let send = schedule.slots[sender][pos];
                        let violated = if pos < beta {
                            send.end + schedule.tau_net >= recv.start
                        } else if pos > beta {
                            recv.end >= send.start
                        } else {
                            false
                        };
                        if violated {
                            bad.insert((receiver, beta));
                        }
                    }
                }
            }
        }
        bad
    }

    #[test]
    fn randomized_schedules_agree_with_the_direct_evaluator() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(20260809);
        let mut p = Pattern::new(3, vec!["a".into(), "b".into()], vec![]).unwrap();
        for action in [
            "send(a[x])",
            "send(b[x])",
            "receive(a)",
            "receive(b)",
            "send(a[x])",
        ] {
            p.push_action(action).unwrap();
        }
        let period = 100.0;
        for _ in 0..200 {
            // random ordered slots per machine
            let slots: Vec<Vec<ScheduleSlot>> = (0..3)
                .map(|_| {
                    let mut points: Vec<f64> =
                        (0..10).map(|_| rng.gen_range(0.0..period - 1.0)).collect();
                    points.sort_by(f64::total_cmp);
                    points
                        .chunks(2)
                        .map(|c| ScheduleSlot {
                            start: c[0],
                            end: c[1],
                        })
                        .collect()
                })
                .collect();
            let schedule = TimedSchedule {
                slots,
                tau_net: rng.gen_range(0.0..20.0),
                period,
            };
            let report = check_da_timed(&schedule, &p).unwrap();
            let got: BTreeSet<(usize, usize)> = report
                .iter()
                .map(|v| (v.receive_machine, v.receive_position))
                .collect();
            assert_eq!(got, oracle_violated_receives(&schedule, &p));
        }
    }

    #[test]
    fn synthesized_schedule_passes_the_checker() {
        let p = fig2_pattern(3);
        let schedule = synthesize_window_schedule(&p, 1.0, 10.0).unwrap();
        assert!(check_da_timed(&schedule, &p).unwrap().is_empty());
        // also for a receive-before-send program order
        let mut odd = Pattern::new(2, vec!["a".into(), "b".into()], vec![]).unwrap();
        odd.push_action("receive(b)").unwrap();
        odd.push_action("send(a[x])").unwrap();
        odd.push_action("receive(a)").unwrap();
        odd.push_action("send(b[x])").unwrap();
        let schedule = synthesize_window_schedule(&odd, 1.5, 30.0).unwrap();
        assert!(check_da_timed(&schedule, &odd).unwrap().is_empty());
    }

    #[test]
    fn latency_beyond_the_period_is_infeasible() {
        let p = fig2_pattern(3);
        assert!(matches!(
            synthesize_window_schedule(&p, 10.0, 10.0),
            Err(SynthesisError::Infeasible { .. })
        ));
    }

    #[test]
    fn duplicate_sends_are_unsupported() {
        let mut p = Pattern::new(2, vec!["b".into()], vec![]).unwrap();
        p.push_action("send(b[x])").unwrap();
        p.push_action("receive(b)").unwrap();
        p.push_action("send(b[x])").unwrap();
        assert!(matches!(
            synthesize_window_schedule(&p, 1.0, 100.0),
            Err(SynthesisError::DuplicateSends(name)) if name == "b"
        ));
    }
}
