use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::io::Write;
use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use crate::contact::ContactTimeline;
use crate::data::PreparedData;
use crate::error::{Error, Result};
use crate::fl::{aggregate_weighted, client_seed, client_update_fixed, client_update_proximal, evaluate, model_size_bytes, Mlp, ModelParams};
use crate::orbital::SatelliteId;
use crate::strategy::{
    enforce_min_epochs, select_clients_first_contact, select_clients_scheduled, select_evaluation_clients, AccessView,
    Algorithm, Augmentation, BufferEntry, BufferState, ClientStatus, Deposit, Direction, ProxPolicy, RelayRoute,
    RoundState,
};

use super::metrics::{MetricsLog, RoundRecord};
use super::timeline::{paint, SatState, StateTotals};
use super::{compute_time, transfer_time, SimConfig};

/// Same-time events run in this order: returns land before new work starts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    TxDone,
    RxDone,
    TrainDone,
    Contact,
    RoundStart,
}

impl Kind {
    fn name(self) -> &'static str {
        match self {
            Kind::TxDone => "tx_done",
            Kind::RxDone => "rx_done",
            Kind::TrainDone => "train_done",
            Kind::Contact => "contact",
            Kind::RoundStart => "round_start",
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Event {
    t: f64,
    kind: Kind,
    sat: Option<SatelliteId>,
    seq: u64,
}

impl Event {
    fn key(&self, other: &Self) -> Ordering {
        self.t
            .total_cmp(&other.t)
            .then(self.kind.cmp(&other.kind))
            .then(self.sat.cmp(&other.sat))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key(other).is_eq()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed: BinaryHeap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key(self)
    }
}

/// One line of the `--trace` event log.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceRecord {
    pub t_s: f64,
    pub kind: &'static str,
    pub sat: Option<SatelliteId>,
    pub round: usize,
}

#[derive(Debug, Clone, Copy)]
enum JobKind {
    Fixed,
    /// Proximal epochs; zero leaves the received model unchanged.
    Prox(usize),
}

struct Job {
    sat: SatelliteId,
    start: Arc<ModelParams>,
    kind: JobKind,
    seed: u64,
}

struct SyncClient {
    job: usize,
    epochs: usize,
    tx: Option<RelayRoute>,
}

struct BuffClient {
    origin: Option<(usize, Arc<ModelParams>)>,
    rx_end: f64,
    stint: u64,
    pending: Option<(usize, usize, usize)>,
}

struct Engine<'a, 'w> {
    cfg: &'a SimConfig,
    sats: Vec<SatelliteId>,
    view: AccessView<'a>,
    data: &'a PreparedData,
    mlp: Mlp,
    global: Arc<ModelParams>,
    version: usize,
    transfer_s: f64,
    epoch_s: f64,
    policy: ProxPolicy,
    busy: BTreeMap<SatelliteId, Vec<(SatState, f64, f64)>>,
    status: BTreeMap<SatelliteId, ClientStatus>,
    queue: BinaryHeap<Event>,
    seq: u64,
    jobs: Vec<Job>,
    results: Vec<Option<ModelParams>>,
    rounds: Vec<RoundRecord>,
    trace: Option<&'w mut dyn Write>,
    t_stop: Option<f64>,
    incomplete: bool,
    note: Option<String>,
}

/// Log of a constellation with a single satellite: no federation is possible.
pub(super) fn single_satellite(cfg: &SimConfig) -> MetricsLog {
    let mut segments = BTreeMap::new();
    let mut totals = BTreeMap::new();
    for s in cfg.constellation.satellite_ids() {
        let segs = paint(s, &[], 0.0, cfg.horizon_s);
        totals.insert(s, StateTotals::from_segments(&segs));
        segments.insert(s, segs);
    }
    MetricsLog {
        rounds: Vec::new(),
        totals,
        t_stop: cfg.horizon_s,
        incomplete_round: false,
        note: Some("cannot perform FL: a single satellite has no peers to aggregate with".into()),
        segments,
    }
}

/// Runs the configured strategy over precomputed contacts and partitioned data.
pub fn simulate(
    cfg: &SimConfig,
    timeline: &ContactTimeline,
    data: &PreparedData,
    trace: Option<&mut dyn Write>,
) -> Result<MetricsLog> {
    cfg.validate()?;
    let sats = cfg.constellation.satellite_ids();
    if sats.len() < 2 {
        return Ok(single_satellite(cfg));
    }
    if let Some(s) = sats.iter().find(|s| !data.clients.contains_key(s)) {
        return Err(Error::InsufficientData(format!("satellite {s} has no training data")));
    }
    let spec = cfg.model_spec(data)?;
    let transfer_s = transfer_time(model_size_bytes(&spec), cfg.bandwidth_bps);
    let view = if cfg.strategy.augmentation.relays() {
        AccessView::with_relays(timeline, &sats, transfer_s)
    } else {
        AccessView::direct(timeline, transfer_s)
    };
    let mut policy = ProxPolicy::default();
    if cfg.strategy.augmentation == Augmentation::ScheduleV2 {
        policy = enforce_min_epochs(policy, cfg.hp.min_epochs);
    }
    let global = Arc::new(spec.init(client_seed(cfg.seed, u64::MAX, 0)));
    let mut engine = Engine {
        cfg,
        status: sats.iter().map(|s| (*s, ClientStatus::Idle)).collect(),
        busy: sats.iter().map(|s| (*s, Vec::new())).collect(),
        sats,
        view,
        data,
        mlp: Mlp::new(spec)?,
        global,
        version: 0,
        transfer_s,
        epoch_s: cfg.epoch_s(),
        policy,
        queue: BinaryHeap::new(),
        seq: 0,
        jobs: Vec::new(),
        results: Vec::new(),
        rounds: Vec::new(),
        trace,
        t_stop: None,
        incomplete: false,
        note: None,
    };
    match cfg.strategy.algorithm {
        Algorithm::FedBuff => engine.run_buffered()?,
        Algorithm::FedAvg | Algorithm::FedProx => engine.run_synchronous()?,
    }
    Ok(engine.finish())
}

impl Engine<'_, '_> {
    fn push(&mut self, t: f64, kind: Kind, sat: Option<SatelliteId>) {
        self.seq += 1;
        self.queue.push(Event { t, kind, sat, seq: self.seq });
    }

    fn record(&mut self, t: f64, kind: &'static str, sat: Option<SatelliteId>) -> Result<()> {
        if let Some(w) = self.trace.as_mut() {
            let rec = TraceRecord {
                t_s: t,
                kind,
                sat,
                round: self.rounds.len(),
            };
            let line = serde_json::to_string(&rec).expect("trace record serializes");
            writeln!(w, "{line}").map_err(|e| Error::io("<trace>", e))?;
        }
        Ok(())
    }

    fn set_status(&mut self, sat: SatelliteId, to: ClientStatus) -> Result<()> {
        let cur = self.status[&sat];
        self.status.insert(sat, cur.advance(to)?);
        Ok(())
    }

    fn mark(&mut self, sat: SatelliteId, state: SatState, a: f64, b: f64) {
        self.busy.entry(sat).or_default().push((state, a, b));
    }

    /// Books the transfer legs of `route` on every satellite it touches.
    fn charge(&mut self, route: &RelayRoute, dir: Direction) {
        let tt = self.transfer_s;
        let p = &route.path;
        let h = p.len() - 1;
        for i in 0..=h {
            let a = route.t_s + i as f64 * tt;
            let b = a + tt;
            match dir {
                Direction::Down => {
                    self.mark(p[h - i], SatState::Rx, a, b);
                    if i > 0 {
                        self.mark(p[h - i + 1], SatState::Tx, a, b);
                    }
                }
                Direction::Up => {
                    self.mark(p[i], SatState::Tx, a, b);
                    if i < h {
                        self.mark(p[i + 1], SatState::Rx, a, b);
                    }
                }
            }
        }
    }

    fn spawn(&mut self, sat: SatelliteId, kind: JobKind, start: Arc<ModelParams>, stream: u64) -> usize {
        let flat = sat.flat_index(self.cfg.constellation.sats_per_cluster) as u64;
        self.jobs.push(Job {
            sat,
            start,
            kind,
            seed: client_seed(self.cfg.seed, flat, stream),
        });
        self.results.push(None);
        self.jobs.len() - 1
    }

    /// Runs every pending training job; jobs are pure so the pool order is irrelevant.
    fn flush(&mut self) -> Result<()> {
        let pending: Vec<usize> = (0..self.jobs.len()).filter(|&i| self.results[i].is_none()).collect();
        if pending.is_empty() {
            return Ok(());
        }
        let (jobs, data, mlp, hp) = (&self.jobs, self.data, &self.mlp, &self.cfg.hp);
        let done: Vec<(usize, ModelParams)> = pending
            .par_iter()
            .map(|&i| {
                let job = &jobs[i];
                let local = &data.clients[&job.sat];
                let w = match job.kind {
                    JobKind::Fixed => client_update_fixed(mlp, &job.start, local, hp, job.seed)?,
                    JobKind::Prox(0) => (*job.start).clone(),
                    JobKind::Prox(e) => client_update_proximal(mlp, &job.start, local, hp, e, job.seed)?.0,
                };
                Ok((i, w))
            })
            .collect::<Result<_>>()?;
        for (i, w) in done {
            self.results[i] = Some(w);
            // The starting model is no longer needed.
            self.jobs[i].start = Arc::clone(&self.global);
        }
        Ok(())
    }

    fn take_result(&mut self, job: usize) -> Result<ModelParams> {
        self.flush()?;
        Ok(self.results[job].take().expect("flushed job has a result"))
    }

    fn n_samples(&self, sat: SatelliteId) -> usize {
        self.data.clients[&sat].n()
    }

    /// Local work the scheduler plans for, per strategy.
    fn planned_training_s(&self) -> f64 {
        match self.cfg.strategy.algorithm {
            Algorithm::FedAvg => compute_time(self.cfg.hp.e, self.cfg.flops_per_epoch, self.cfg.flops_rate),
            _ => self.policy.min_epochs as f64 * self.epoch_s,
        }
    }

    fn select(&self, t: f64) -> Vec<SatelliteId> {
        let c = self.cfg.hp.clients_per_round(self.sats.len());
        if self.cfg.strategy.augmentation.scheduled() {
            select_clients_scheduled(&self.view, &self.sats, &self.status, t, c, self.planned_training_s())
        } else {
            select_clients_first_contact(&self.view, &self.sats, &self.status, t, c)
        }
    }

    fn install(&mut self, updates: &[(ModelParams, usize)], t_start: f64, t_end: f64, participants: Vec<SatelliteId>, mean_epochs: f64) -> Result<()> {
        self.global = Arc::new(aggregate_weighted(updates)?);
        self.version += 1;
        let (accuracy, loss) = if self.data.test.is_empty() {
            (0.0, f64::NAN)
        } else {
            evaluate(&self.mlp, &self.global, &self.data.test)?
        };
        let client_accuracy = match self.cfg.eval {
            super::EvalMode::Server => None,
            super::EvalMode::ServerAndClients => {
                let scheduled = self.cfg.strategy.augmentation.scheduled().then(|| self.planned_training_s());
                let c = self.cfg.hp.clients_per_round(self.sats.len());
                let chosen = select_evaluation_clients(&self.view, &self.sats, &self.status, t_end, c, scheduled);
                let mut hits = 0.0;
                let mut total = 0usize;
                for s in chosen {
                    let local = &self.data.clients[&s];
                    let (acc, _) = evaluate(&self.mlp, &self.global, local)?;
                    hits += acc * local.n() as f64;
                    total += local.n();
                }
                (total > 0).then(|| hits / total as f64)
            }
        };
        self.rounds.push(RoundRecord {
            round_idx: self.rounds.len(),
            t_start,
            t_end,
            duration_s: t_end - t_start,
            participants,
            accuracy,
            loss,
            client_accuracy,
            mean_epochs,
        });
        self.record(t_end, "aggregate", None)
    }

    fn stop_incomplete(&mut self) {
        self.incomplete = true;
        self.t_stop = Some(self.cfg.horizon_s);
    }

    fn run_synchronous(&mut self) -> Result<()> {
        let fedavg = self.cfg.strategy.algorithm == Algorithm::FedAvg;
        let horizon = self.cfg.horizon_s;
        let mut round: Option<RoundState> = None;
        let mut clients: BTreeMap<SatelliteId, SyncClient> = BTreeMap::new();
        self.push(0.0, Kind::RoundStart, None);
        while let Some(ev) = self.queue.pop() {
            let t = ev.t;
            self.record(t, ev.kind.name(), ev.sat)?;
            match ev.kind {
                Kind::RoundStart => {
                    if self.rounds.len() >= self.cfg.max_rounds {
                        self.t_stop = Some(t);
                        break;
                    }
                    let selected = self.select(t);
                    if selected.is_empty() {
                        self.note = Some("no satellite can complete another round inside the horizon".into());
                        break;
                    }
                    for &k in &selected {
                        self.set_status(k, ClientStatus::AwaitingModel)?;
                        let route = self.view.next_rx(k, t).expect("selected clients have a contact");
                        self.charge(&route, Direction::Down);
                        self.push(route.end_s(self.transfer_s), Kind::RxDone, Some(k));
                    }
                    clients.clear();
                    round = Some(RoundState::new(self.rounds.len(), selected, t));
                }
                Kind::RxDone => {
                    let k = ev.sat.expect("client event");
                    self.set_status(k, ClientStatus::Training)?;
                    let stream = self.rounds.len() as u64;
                    let start = Arc::clone(&self.global);
                    if fedavg {
                        let e = self.cfg.hp.e;
                        let done = t + compute_time(e, self.cfg.flops_per_epoch, self.cfg.flops_rate);
                        self.mark(k, SatState::Compute, t, done);
                        let job = self.spawn(k, JobKind::Fixed, start, stream);
                        clients.insert(k, SyncClient { job, epochs: e, tx: None });
                        self.push(done, Kind::TrainDone, Some(k));
                    } else {
                        let ready = self.policy.ready_at(t, self.epoch_s);
                        let Some(route) = self.view.next_tx(k, ready) else {
                            self.mark(k, SatState::Compute, t, horizon);
                            self.stop_incomplete();
                            break;
                        };
                        let epochs = self.policy.epochs_done(t, route.t_s, self.epoch_s);
                        let run = epochs.min(self.cfg.hp.prox_epoch_cap);
                        self.mark(k, SatState::Compute, t, route.t_s);
                        let job = self.spawn(k, JobKind::Prox(run), start, stream);
                        let at = route.t_s;
                        clients.insert(k, SyncClient { job, epochs, tx: Some(route) });
                        self.push(at, Kind::TrainDone, Some(k));
                    }
                }
                Kind::TrainDone => {
                    let k = ev.sat.expect("client event");
                    self.set_status(k, ClientStatus::AwaitingReturn)?;
                    let planned = clients.get_mut(&k).and_then(|c| c.tx.take());
                    let Some(route) = planned.or_else(|| self.view.next_tx(k, t)) else {
                        self.stop_incomplete();
                        break;
                    };
                    self.charge(&route, Direction::Up);
                    self.push(route.end_s(self.transfer_s), Kind::TxDone, Some(k));
                }
                Kind::TxDone => {
                    let k = ev.sat.expect("client event");
                    self.set_status(k, ClientStatus::Idle)?;
                    let job = clients[&k].job;
                    let w = self.take_result(job)?;
                    let n = self.n_samples(k);
                    let state = round.as_mut().expect("round in progress");
                    state.receive(k, w, n)?;
                    if state.complete() {
                        let mut state = round.take().expect("round in progress");
                        state.t_round_end = Some(t);
                        let updates: Vec<(ModelParams, usize)> = state.received.into_values().collect();
                        let mean_epochs =
                            clients.values().map(|c| c.epochs as f64).sum::<f64>() / clients.len() as f64;
                        self.install(&updates, state.t_round_start, t, state.selected, mean_epochs)?;
                        self.push(t, Kind::RoundStart, None);
                    }
                }
                Kind::Contact => unreachable!("synchronous strategies do not schedule contacts"),
            }
        }
        Ok(())
    }

    fn run_buffered(&mut self) -> Result<()> {
        let horizon = self.cfg.horizon_s;
        let k_total = self.sats.len();
        let mut buffer: BufferState<(usize, usize)> = BufferState::new(self.cfg.hp.buffer_size(k_total), self.cfg.hp.staleness_max);
        let mut clients: BTreeMap<SatelliteId, BuffClient> = BTreeMap::new();
        for s in self.sats.clone() {
            self.set_status(s, ClientStatus::AwaitingModel)?;
            clients.insert(
                s,
                BuffClient {
                    origin: None,
                    rx_end: 0.0,
                    stint: 0,
                    pending: None,
                },
            );
            if let Some(r) = self.view.next_rx(s, 0.0) {
                self.push(r.t_s, Kind::Contact, Some(s));
            }
        }
        let mut last_aggregation = 0.0;
        let tt = self.transfer_s;
        while let Some(ev) = self.queue.pop() {
            let t = ev.t;
            self.record(t, ev.kind.name(), ev.sat)?;
            let k = ev.sat.expect("client event");
            match ev.kind {
                Kind::Contact => {
                    let c = clients.get_mut(&k).expect("known client");
                    match c.origin.take() {
                        Some((version, start)) => {
                            let epochs = ((t - c.rx_end) / self.epoch_s).floor().max(0.0) as usize;
                            let run = epochs.min(self.cfg.hp.prox_epoch_cap);
                            let rx_end = c.rx_end;
                            let stream = c.stint;
                            c.stint += 1;
                            let job = self.spawn(k, JobKind::Prox(run), start, stream);
                            clients.get_mut(&k).expect("known client").pending = Some((job, version, epochs));
                            self.mark(k, SatState::Compute, rx_end, t);
                            self.mark(k, SatState::Tx, t, t + tt);
                            self.set_status(k, ClientStatus::AwaitingReturn)?;
                            self.push(t + tt, Kind::TxDone, Some(k));
                        }
                        None => {
                            self.mark(k, SatState::Rx, t, t + tt);
                            self.push(t + tt, Kind::RxDone, Some(k));
                        }
                    }
                }
                Kind::TxDone => {
                    let (job, version, epochs) = clients
                        .get_mut(&k)
                        .and_then(|c| c.pending.take())
                        .expect("deposit follows a contact");
                    self.set_status(k, ClientStatus::Idle)?;
                    self.set_status(k, ClientStatus::AwaitingModel)?;
                    let entry = BufferEntry {
                        client: k,
                        params: (job, epochs),
                        n: self.n_samples(k),
                        staleness: self.version - version,
                    };
                    if buffer.deposit(entry) == Deposit::Full {
                        let entries = buffer.drain();
                        self.flush()?;
                        let mut updates = Vec::with_capacity(entries.len());
                        for e in &entries {
                            updates.push((self.results[e.params.0].take().expect("flushed"), e.n));
                        }
                        let mean_epochs = entries.iter().map(|e| e.params.1 as f64).sum::<f64>() / entries.len() as f64;
                        let who = entries.iter().map(|e| e.client).collect();
                        self.install(&updates, last_aggregation, t, who, mean_epochs)?;
                        last_aggregation = t;
                        if self.rounds.len() >= self.cfg.max_rounds {
                            self.t_stop = Some(t);
                            break;
                        }
                    }
                    // Refresh within the same contact.
                    self.mark(k, SatState::Rx, t, t + tt);
                    self.push(t + tt, Kind::RxDone, Some(k));
                }
                Kind::RxDone => {
                    self.set_status(k, ClientStatus::Training)?;
                    let c = clients.get_mut(&k).expect("known client");
                    c.origin = Some((self.version, Arc::clone(&self.global)));
                    c.rx_end = t;
                    match self.view.next_tx(k, t) {
                        Some(r) => self.push(r.t_s, Kind::Contact, Some(k)),
                        None => self.mark(k, SatState::Compute, t, horizon),
                    }
                }
                Kind::TrainDone | Kind::RoundStart => unreachable!("buffered strategy uses contacts only"),
            }
        }
        // Clients still training when the run stopped.
        let stop = self.t_stop.unwrap_or(horizon);
        for (s, c) in &clients {
            if c.origin.is_some() {
                self.busy.entry(*s).or_default().push((SatState::Compute, c.rx_end, stop));
            }
        }
        Ok(())
    }

    fn finish(self) -> MetricsLog {
        let t_stop = self.t_stop.unwrap_or(self.cfg.horizon_s);
        let mut segments = BTreeMap::new();
        let mut totals = BTreeMap::new();
        for s in &self.sats {
            let segs = paint(*s, self.busy.get(s).map_or(&[][..], Vec::as_slice), 0.0, t_stop);
            totals.insert(*s, StateTotals::from_segments(&segs));
            segments.insert(*s, segs);
        }
        MetricsLog {
            rounds: self.rounds,
            totals,
            t_stop,
            incomplete_round: self.incomplete,
            note: self.note,
            segments,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contact::tests::{gw, sat};
    use crate::data::{prepare, DatasetSource};
    use crate::fl::HyperParams;
    use crate::orbital::ConstellationSpec;
    use crate::strategy::StrategyKind;

    const HORIZON: f64 = 20_000.0;

    /// Four satellites seeing one station for 300 s every 1000 s, staggered by 250 s.
    fn fixture() -> ContactTimeline {
        let mut w = Vec::new();
        for s in 0..4 {
            let mut t = 250.0 * s as f64;
            while t + 300.0 < HORIZON {
                w.push(gw(sat(0, s), 0, t, t + 300.0));
                t += 1000.0;
            }
        }
        ContactTimeline::new(vec!["st".into()], (0.0, HORIZON), w).unwrap()
    }

    fn config(strategy: &str) -> SimConfig {
        SimConfig {
            constellation: ConstellationSpec::walker_star(1, 4),
            stations: 1,
            strategy: strategy.parse::<StrategyKind>().unwrap(),
            hp: HyperParams {
                c: 2,
                e: 2,
                ..Default::default()
            },
            horizon_s: HORIZON,
            max_rounds: 6,
            hidden: vec![8],
            dataset: "synthetic:dim=8,classes=4".parse::<DatasetSource>().unwrap(),
            clip: (20, 30),
            // Slow hardware so compute time is visible next to the windows.
            flops_rate: 98e6 / 40.0,
            ..Default::default()
        }
    }

    fn run(strategy: &str, trace: Option<&mut dyn Write>) -> MetricsLog {
        let cfg = config(strategy);
        let data = prepare(&cfg.dataset, &cfg.constellation.satellite_ids(), cfg.clip, cfg.seed).unwrap();
        simulate(&cfg, &fixture(), &data, trace).unwrap()
    }

    fn check_accounting(log: &MetricsLog) {
        for (s, t) in &log.totals {
            assert!((t.elapsed() - log.t_stop).abs() < 1e-6, "{s}: {} vs {}", t.elapsed(), log.t_stop);
            let segs = &log.segments[s];
            assert_eq!(segs.first().unwrap().t0, 0.0);
            for w in segs.windows(2) {
                assert_eq!(w[0].t1, w[1].t0);
            }
        }
    }

    #[test]
    fn deterministic() {
        for s in ["fedavg:base", "fedprox:schedule", "fedbuff:base"] {
            let a = run(s, None);
            let b = run(s, None);
            assert_eq!(a, b, "{s}");
            assert!(a.completed_rounds() > 0, "{s}");
        }
    }

    #[test]
    fn rounds_are_causal_and_bounded() {
        for s in StrategyKind::all() {
            let log = run(&s.to_string(), None);
            assert!(log.completed_rounds() <= 6);
            let mut prev = 0.0;
            for r in &log.rounds {
                assert!(r.t_end >= r.t_start && r.t_start >= prev - 1e-9, "{s}");
                assert!(r.participants.len() <= 2);
                prev = r.t_end;
            }
            check_accounting(&log);
        }
    }

    #[test]
    fn trace_is_time_ordered() {
        let mut buf = Vec::new();
        run("fedavg:intra_cc", Some(&mut buf));
        let text = String::from_utf8(buf).unwrap();
        let mut prev = f64::NEG_INFINITY;
        let mut n = 0;
        for line in text.lines() {
            let v: serde_json::Value = serde_json::from_str(line).unwrap();
            let t = v["t_s"].as_f64().unwrap();
            assert!(t >= prev);
            prev = t;
            n += 1;
        }
        assert!(n > 10);
        assert!(text.contains("\"kind\":\"aggregate\""));
    }

    #[test]
    fn fedavg_waits_between_contacts() {
        let log = run("fedavg:base", None);
        let epoch = 98e6 / (98e6 / 40.0);
        for r in &log.rounds {
            assert_eq!(r.mean_epochs, 2.0);
        }
        let compute: f64 = log.totals.values().map(|t| t.compute_s).sum();
        let expected = 2.0 * epoch * 2.0 * log.completed_rounds() as f64;
        assert!((compute - expected).abs() < 1e-6, "{compute} vs {expected}");
        assert!(log.idle_fraction() > 0.5);
    }

    #[test]
    fn fedprox_trains_until_return() {
        let avg = run("fedavg:base", None);
        let prox = run("fedprox:base", None);
        let busy = |l: &MetricsLog| l.totals.values().map(|t| t.compute_s).sum::<f64>();
        assert!(busy(&prox) > busy(&avg));
        assert!(prox.rounds.iter().all(|r| r.mean_epochs >= 1.0));
    }

    #[test]
    fn fedbuff_keeps_satellites_busy() {
        let log = run("fedbuff:base", None);
        check_accounting(&log);
        // Only the wait before each satellite's first contact is idle.
        for (s, t) in &log.totals {
            assert!(t.idle_s <= 250.0 * s.slot_idx as f64 + 1e-6, "{s}: {}", t.idle_s);
        }
        let prox = run("fedprox:base", None);
        assert!(log.idle_fraction() < prox.idle_fraction());
    }

    #[test]
    fn stops_when_round_cannot_finish() {
        let mut cfg = config("fedavg:base");
        cfg.max_rounds = 1000;
        let data = prepare(&cfg.dataset, &cfg.constellation.satellite_ids(), cfg.clip, cfg.seed).unwrap();
        let log = simulate(&cfg, &fixture(), &data, None).unwrap();
        assert!(log.completed_rounds() < 1000);
        assert_eq!(log.t_stop, HORIZON);
        check_accounting(&log);
    }

    #[test]
    fn zero_learning_rate_is_a_fixed_point() {
        for s in ["fedavg:base", "fedprox:schedule", "fedbuff:base"] {
            let mut cfg = config(s);
            cfg.hp.eta = 0.0;
            let data = prepare(&cfg.dataset, &cfg.constellation.satellite_ids(), cfg.clip, cfg.seed).unwrap();
            let log = simulate(&cfg, &fixture(), &data, None).unwrap();
            assert!(log.completed_rounds() > 1);
            let first = &log.rounds[0];
            assert!(log.rounds.iter().all(|r| (r.loss - first.loss).abs() < 1e-12 && r.accuracy == first.accuracy), "{s}");
        }
    }

    #[test]
    fn missing_client_data_is_an_error() {
        let cfg = config("fedavg:base");
        let mut data = prepare(&cfg.dataset, &cfg.constellation.satellite_ids(), cfg.clip, cfg.seed).unwrap();
        data.clients.remove(&sat(0, 3));
        assert!(simulate(&cfg, &fixture(), &data, None).is_err());
    }
}
