//! Threaded runner: one OS thread per agent, all sharing the world behind a
//! mutex.
//!
//! Interleavings depend on the OS scheduler, so runs are not reproducible;
//! use it to stress the protocol and check invariants, not golden outputs.
//! Quiescence is detected with a version counter bumped on every unit of
//! work: once every agent has reported "nothing to do" at the current
//! version, the coordinator lets tick deadlines expire, advances the epoch
//! clock, or declares the run finished or stalled.

use std::sync::{Arc, Mutex, MutexGuard};
use std::thread;
use std::time::Duration;

use smartson_core::agents::Activity;
use smartson_core::harness::{run_scenario_with, HarnessError, ScenarioRun};
use smartson_core::sim::{AgentSlot, SimError, Simulation};
use smartson_core::{ResourceSpec, ScenarioConfig, World};

struct Shared {
    world: World,
    version: u64,
    /// Per agent: the version at which it last had nothing to do.
    settled: Vec<Option<(u64, Activity)>>,
    busy: Vec<bool>,
    finished: bool,
}

fn lock(m: &Mutex<Shared>) -> MutexGuard<'_, Shared> {
    m.lock().unwrap_or_else(|poisoned| poisoned.into_inner())
}

/// Drives `sim` to quiescence with every agent on its own thread.
pub fn drive_threaded(sim: &mut Simulation, max_checks: u64) -> Result<(), SimError> {
    let agents = sim.take_agents();
    let n = agents.len();
    let shared = Arc::new(Mutex::new(Shared {
        world: std::mem::take(&mut sim.world),
        version: 0,
        settled: vec![None; n],
        busy: agents.iter().map(AgentSlot::is_busy).collect(),
        finished: false,
    }));

    let handles: Vec<_> = agents
        .into_iter()
        .enumerate()
        .map(|(i, mut agent)| {
            let shared = Arc::clone(&shared);
            thread::spawn(move || {
                loop {
                    {
                        let mut g = lock(&shared);
                        if g.finished {
                            break;
                        }
                        let activity = agent.step(&mut g.world);
                        g.busy[i] = agent.is_busy();
                        if activity == Activity::Worked {
                            g.version += 1;
                            g.settled[i] = None;
                        } else {
                            g.settled[i] = Some((g.version, activity));
                        }
                    }
                    thread::yield_now();
                }
                agent
            })
        })
        .collect();

    let mut outcome = Err(SimError::RoundLimit(max_checks));
    for _ in 0..max_checks {
        thread::sleep(Duration::from_micros(50));
        let mut g = lock(&shared);
        g.world.platform.advance_tick();
        let version = g.version;
        let all_settled = g.settled.iter().all(|s| matches!(s, Some((v, _)) if *v == version));
        if !all_settled {
            continue;
        }
        let mut waits_on_tick = false;
        let mut next_epoch: Option<u64> = None;
        for (_, activity) in g.settled.iter().flatten() {
            if let Activity::Blocked { tick, epoch } = activity {
                waits_on_tick |= tick.is_some();
                if let Some(e) = epoch {
                    next_epoch = Some(next_epoch.map_or(*e, |m| m.min(*e)));
                }
            }
        }
        if waits_on_tick {
            g.version += 1;
            continue;
        }
        if let Some(e) = next_epoch {
            g.world.advance_epoch_to(e);
            g.version += 1;
            continue;
        }
        let pending = g.world.platform.pending();
        outcome = if g.busy.iter().any(|b| *b) || pending > 0 {
            Err(SimError::Stalled {
                waiting: Vec::new(),
                pending,
            })
        } else {
            Ok(())
        };
        break;
    }
    lock(&shared).finished = true;

    let agents: Vec<AgentSlot> = handles
        .into_iter()
        .map(|h| h.join().expect("agent thread panicked"))
        .collect();
    sim.restore_agents(agents);
    sim.world = std::mem::take(&mut lock(&shared).world);
    outcome
}

/// Upper bound on coordinator checks per epoch (50 µs apart).
pub const DEFAULT_MAX_CHECKS: u64 = 2_000_000;

/// Runs the scenario with [`drive_threaded`] in place of the round-robin
/// scheduler.
pub fn run_concurrent(cfg: &ScenarioConfig, trace: &[ResourceSpec]) -> Result<ScenarioRun, HarnessError> {
    run_scenario_with(cfg, trace, |sim| drive_threaded(sim, DEFAULT_MAX_CHECKS))
}
