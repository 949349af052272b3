//! Drives a full protocol exchange between one master and `S` worker
//! threads over a chosen transport.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use dsdr_core::estimate::{KRule, SdrEstimate};
use dsdr_core::{Dataset, Method};

use crate::error::{ProtocolError, Result};
use crate::ledger::{CommLedger, Direction};
use crate::message::{Broadcast1, EigenPayload, ErrorMsg, Message, Round1Msg, Round2Msg};
use crate::ops::{
    approx_local, approx_master, back_transform, edsir_finalize, edsir_master_round1, edsir_worker_round1,
    edsir_worker_round2, pooled_covariance, Aggregation, Standardization,
};
use crate::transport::{inproc_pair, recv_message, send_message, Link, TcpHub, TcpLink, IO_TIMEOUT};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProtocolMode {
    /// Two-round exact SIR.
    Exact,
    /// One-shot eigen aggregation with shard-local centering and grids.
    ApproxHomogeneous,
    /// Eigen aggregation after a round that fixes a global mean and grid.
    ApproxHeterogeneous,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportKind {
    InProcess,
    /// Localhost TCP; port 0 picks a free port.
    Tcp { port: u16 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub mode: ProtocolMode,
    pub method: Method,
    pub slices: usize,
    /// Directions kept per worker (approximate modes).
    pub local_k: KRule,
    /// Directions kept by the master.
    pub global_k: KRule,
    pub aggregation: Aggregation,
    /// In heterogeneous mode, also pool the scatter matrices and map the
    /// final directions back with the pooled covariance.
    pub back_transform: bool,
    pub transport: TransportKind,
}

impl ProtocolConfig {
    pub fn new(mode: ProtocolMode, method: Method, slices: usize, k: usize) -> Self {
        Self {
            mode,
            method,
            slices,
            local_k: KRule::Fixed(k),
            global_k: KRule::Fixed(k),
            aggregation: Aggregation::SpectrumWeighted,
            back_transform: false,
            transport: TransportKind::InProcess,
        }
    }

    fn sends_scatter(&self) -> bool {
        self.mode == ProtocolMode::ApproxHeterogeneous && self.back_transform
    }
}

/// Compute-time breakdown of a run.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunTiming {
    /// Slowest worker's compute time in each round.
    pub worker_rounds: Vec<Duration>,
    /// Master aggregation time.
    pub master: Duration,
    /// Elapsed time of the whole exchange on this machine.
    pub wall: Duration,
}

impl RunTiming {
    /// Time the run would take with every worker on its own machine.
    pub fn simulated_parallel(&self) -> Duration {
        self.worker_rounds.iter().sum::<Duration>() + self.master
    }

    pub fn worker_phase(&self) -> Duration {
        self.worker_rounds.iter().sum()
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    pub estimate: SdrEstimate<f64>,
    pub ledger: CommLedger,
    pub timing: RunTiming,
}

/// Runs the configured protocol on `shards`, one worker per shard.
pub fn run_protocol(shards: &[Dataset<f64>], cfg: &ProtocolConfig) -> Result<ProtocolRun> {
    if shards.is_empty() {
        return Err(ProtocolError::NoWorkers);
    }
    if cfg.mode == ProtocolMode::Exact && cfg.method != Method::Sir {
        return Err(ProtocolError::ExactRequiresSir);
    }
    // Workers take turns computing so each measures an uncontended duration
    // even when there are fewer cores than workers.
    let gate = Mutex::new(());
    let start = Instant::now();

    let (outcome, worker_times) = std::thread::scope(|scope| {
        let mut handles = Vec::with_capacity(shards.len());
        let master_links: Result<(Vec<Box<dyn Link>>, Vec<Option<u32>>)> = match cfg.transport {
            TransportKind::InProcess => {
                let mut links: Vec<Box<dyn Link>> = Vec::new();
                for (id, shard) in shards.iter().enumerate() {
                    let (master_end, worker_end) = inproc_pair();
                    let gate = &gate;
                    handles.push(scope.spawn(move || worker_main(id as u32, shard, cfg, Box::new(worker_end), gate)));
                    links.push(Box::new(master_end));
                }
                Ok((links, (0..shards.len() as u32).map(Some).collect()))
            }
            TransportKind::Tcp { port } => TcpHub::bind(port).and_then(|hub| {
                let addr = hub.local_addr()?;
                for (id, shard) in shards.iter().enumerate() {
                    let gate = &gate;
                    handles.push(scope.spawn(move || {
                        let link = TcpLink::connect(addr)?;
                        worker_main(id as u32, shard, cfg, Box::new(link), gate)
                    }));
                }
                let links = hub
                    .accept(shards.len(), IO_TIMEOUT)?
                    .into_iter()
                    .map(|l| Box::new(l) as Box<dyn Link>)
                    .collect();
                // accept order says nothing about which worker connected
                Ok((links, vec![None; shards.len()]))
            }),
        };
        let outcome = master_links.and_then(|(links, ids)| master_main(links, ids, cfg));
        let times: Vec<Result<Vec<Duration>>> = handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(ProtocolError::transport(0, "worker panicked"))))
            .collect();
        (outcome, times)
    });
    let (estimate, ledger, master_time) = outcome?;

    let mut worker_rounds: Vec<Duration> = Vec::new();
    for t in worker_times {
        for (r, d) in t?.into_iter().enumerate() {
            if worker_rounds.len() <= r {
                worker_rounds.push(Duration::ZERO);
            }
            worker_rounds[r] = worker_rounds[r].max(d);
        }
    }
    Ok(ProtocolRun {
        estimate,
        ledger,
        timing: RunTiming {
            worker_rounds,
            master: master_time,
            wall: start.elapsed(),
        },
    })
}

fn timed<T>(gate: &Mutex<()>, f: impl FnOnce() -> T) -> (T, Duration) {
    let _turn = gate.lock().unwrap_or_else(|e| e.into_inner());
    let t = Instant::now();
    let out = f();
    (out, t.elapsed())
}

/// Worker state machine; returns its compute time per round.
fn worker_main(
    id: u32,
    shard: &Dataset<f64>,
    cfg: &ProtocolConfig,
    mut link: Box<dyn Link>,
    gate: &Mutex<()>,
) -> Result<Vec<Duration>> {
    let link = link.as_mut();
    let result = worker_steps(id, shard, cfg, link, gate);
    if let Err(e) = &result {
        // best effort; the master may already be gone
        let _ = send_message(
            link,
            &Message::Error(ErrorMsg {
                code: e.code(),
                text: e.to_string(),
            }),
        );
    }
    result
}

fn worker_steps(
    id: u32,
    shard: &Dataset<f64>,
    cfg: &ProtocolConfig,
    link: &mut dyn Link,
    gate: &Mutex<()>,
) -> Result<Vec<Duration>> {
    let mut times = Vec::new();
    let local = |b: Option<&Broadcast1>| {
        let std = b.map_or(Standardization::Local, Standardization::FromBroadcast);
        approx_local(id, shard, cfg.method, cfg.slices, cfg.local_k, std)
    };
    match cfg.mode {
        ProtocolMode::ApproxHomogeneous => {
            let (payload, d) = timed(gate, || local(None));
            times.push(d);
            send_message(link, &payload?.into())?;
        }
        ProtocolMode::Exact | ProtocolMode::ApproxHeterogeneous => {
            let (r1, d) = timed(gate, || edsir_worker_round1(id, shard));
            times.push(d);
            send_message(link, &r1.into())?;
            let b = match recv_message(link)?.0 {
                Message::Broadcast1(b) => b,
                other => {
                    return Err(ProtocolError::ProtocolViolation {
                        expected: "broadcast",
                        found: other.kind(),
                    })
                }
            };
            if cfg.mode == ProtocolMode::Exact {
                let (r2, d) = timed(gate, || edsir_worker_round2(id, shard, &b));
                times.push(d);
                send_message(link, &r2?.into())?;
            } else {
                let ((payload, scatter), d) = timed(gate, || {
                    let payload = local(Some(&b));
                    let scatter = cfg.sends_scatter().then(|| edsir_worker_round2(id, shard, &b));
                    (payload, scatter)
                });
                times.push(d);
                send_message(link, &payload?.into())?;
                if let Some(r2) = scatter {
                    send_message(link, &r2?.into())?;
                }
            }
        }
    }
    Ok(times)
}

/// Receives one message per link; error frames become `WorkerFailed`.
fn gather(
    links: &mut [Box<dyn Link>],
    ledger: &mut CommLedger,
    round: u8,
    ids: &[Option<u32>],
) -> Result<Vec<Message>> {
    let mut out = Vec::with_capacity(links.len());
    for (link, known) in links.iter_mut().zip(ids) {
        let (msg, len) = recv_message(link.as_mut())?;
        let id = msg.worker_id().or(*known);
        ledger.record(round, Direction::Up, id, &msg, len);
        if let Message::Error(e) = msg {
            return Err(ProtocolError::WorkerFailed {
                worker_id: id,
                code: e.code,
                message: e.text,
            });
        }
        out.push(msg);
    }
    Ok(out)
}

fn expect_round1(msgs: Vec<Message>) -> Result<Vec<Round1Msg>> {
    msgs.into_iter()
        .map(|m| match m {
            Message::Round1(r) => Ok(r),
            other => Err(ProtocolError::ProtocolViolation {
                expected: "round-1 statistics",
                found: other.kind(),
            }),
        })
        .collect()
}

fn expect_round2(msgs: Vec<Message>) -> Result<Vec<Round2Msg>> {
    msgs.into_iter()
        .map(|m| match m {
            Message::Round2(r) => Ok(r),
            other => Err(ProtocolError::ProtocolViolation {
                expected: "round-2 statistics",
                found: other.kind(),
            }),
        })
        .collect()
}

fn expect_eigen(msgs: Vec<Message>) -> Result<Vec<EigenPayload>> {
    msgs.into_iter()
        .map(|m| match m {
            Message::Eigen(r) => Ok(r),
            other => Err(ProtocolError::ProtocolViolation {
                expected: "eigen payload",
                found: other.kind(),
            }),
        })
        .collect()
}

/// Sends the broadcast to every worker and records it.
fn broadcast(
    links: &mut [Box<dyn Link>],
    ledger: &mut CommLedger,
    ids: &[Option<u32>],
    b: Broadcast1,
) -> Result<()> {
    let msg = Message::Broadcast1(b);
    for (link, id) in links.iter_mut().zip(ids) {
        let len = send_message(link.as_mut(), &msg)?;
        ledger.record(1, Direction::Down, *id, &msg, len);
    }
    Ok(())
}

/// `link_ids` holds the worker behind each link when it is known up front.
fn master_main(
    mut links: Vec<Box<dyn Link>>,
    link_ids: Vec<Option<u32>>,
    cfg: &ProtocolConfig,
) -> Result<(SdrEstimate<f64>, CommLedger, Duration)> {
    let mut ledger = CommLedger::new();
    let mut master = Duration::ZERO;
    let workers = links.len();

    let estimate = match cfg.mode {
        ProtocolMode::ApproxHomogeneous => {
            let payloads = expect_eigen(gather(&mut links, &mut ledger, 1, &link_ids)?)?;
            let t = Instant::now();
            let fit = approx_master(&payloads, cfg.global_k, cfg.aggregation)?;
            master += t.elapsed();
            fit.estimate
        }
        ProtocolMode::Exact | ProtocolMode::ApproxHeterogeneous => {
            let r1 = expect_round1(gather(&mut links, &mut ledger, 1, &link_ids)?)?;
            let ids: Vec<Option<u32>> = r1.iter().map(|m| Some(m.worker_id)).collect();
            let t = Instant::now();
            let b = edsir_master_round1(&r1, cfg.slices)?;
            master += t.elapsed();
            broadcast(&mut links, &mut ledger, &ids, b)?;

            if cfg.mode == ProtocolMode::Exact {
                let r2 = expect_round2(gather(&mut links, &mut ledger, 2, &ids)?)?;
                let t = Instant::now();
                let fit = edsir_finalize(&r2, cfg.global_k)?;
                master += t.elapsed();
                fit.estimate
            } else {
                let payloads = expect_eigen(gather(&mut links, &mut ledger, 2, &ids)?)?;
                let scatter = if cfg.sends_scatter() {
                    Some(expect_round2(gather(&mut links, &mut ledger, 2, &ids)?)?)
                } else {
                    None
                };
                let t = Instant::now();
                let mut est = approx_master(&payloads, cfg.global_k, cfg.aggregation)?.estimate;
                if let Some(r2) = scatter {
                    let sigma = pooled_covariance(&r2)?;
                    back_transform(&mut est, sigma.view())?;
                }
                master += t.elapsed();
                est
            }
        }
    };

    let mut estimate = estimate;
    estimate.params.slices = cfg.slices;
    estimate.params.workers = workers;
    Ok((estimate, ledger, master))
}
