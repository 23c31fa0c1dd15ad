//! Composition of background, benign and malicious sequences into one
//! time-ordered synthetic log.
//!
//! Benign logs are placed at a start time by adding each event's relative
//! offset; technique sequences chain off the previous technique's end plus a
//! lapse, with short benign prefixes sampled from the background pool into
//! each lapse window. Process identities are allocated per technique step,
//! every technique process gets a ProcessCreate predecessor (in-template or
//! synthesized from the root shell), and the finalized stream is the unique
//! (time, seq) order. Streams larger than the in-memory cap spill to sorted
//! runs and finalize with a k-way merge.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BTreeSet, BinaryHeap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::PathBuf;

use rand::Rng;
use thiserror::Error;

use crate::model::{
    compare_events, format_time_us, object_kind_for_op, parse_time_us, Event, EntityKind, Label,
    Stage, SystemEntity,
};
use crate::planner::PlannedCampaign;
use crate::template::{ObjectRef, Placeholder};

/// Procmon-style CSV header shared by the loader and the exporter.
pub const CSV_HEADER: [&str; 7] =
    ["Time", "Process Name", "PID", "Operation", "Path", "Result", "Detail"];

/// A benign activity recording: all-O events with relative offsets, plus an
/// absolute placement and span.
#[derive(Debug, Clone)]
pub struct BenignLog {
    pub events: Vec<Event>,
    pub start_us: u64,
    pub length_us: u64,
}

/// Ambient events used both as the base layer of the synthetic log and as
/// the sampling pool for benign prefixes.
#[derive(Debug, Clone)]
pub struct BackgroundPool {
    pub events: Vec<Event>,
    pub span_us: u64,
}

impl BackgroundPool {
    pub fn from_benign(log: BenignLog) -> BackgroundPool {
        BackgroundPool { span_us: log.length_us, events: log.events }
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

#[derive(Debug, Error)]
pub enum LoadError {
    #[error("csv row {row}: {message}")]
    CsvParse { row: usize, message: String },
    #[error("csv row {row}: time regresses beyond the allowed slack")]
    NonMonotonicTime { row: usize },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Parse a Procmon-style CSV stream into a benign log placed at `start_us`.
///
/// Relative offsets are row time minus first-row time; a row may precede its
/// predecessor by at most `slack_us` (clamped up to keep offsets
/// non-decreasing), anything worse is an error. Labels are all-O.
pub fn load_benign_log(
    reader: impl Read,
    start_us: u64,
    slack_us: u64,
) -> Result<BenignLog, LoadError> {
    let mut csv_reader = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let mut events = Vec::new();
    let mut first_time: Option<u64> = None;
    let mut prev_rel: u64 = 0;

    for (idx, record) in csv_reader.records().enumerate() {
        let row = idx + 2; // header is row 1
        let record = record.map_err(|e| LoadError::CsvParse { row, message: e.to_string() })?;
        if record.len() != 7 {
            return Err(LoadError::CsvParse {
                row,
                message: format!("expected 7 columns, got {}", record.len()),
            });
        }
        let time_us = parse_time_us(&record[0]).ok_or_else(|| LoadError::CsvParse {
            row,
            message: format!("bad Time value {:?}", &record[0]),
        })?;
        let pid: u32 = record[2].trim().parse().map_err(|_| LoadError::CsvParse {
            row,
            message: format!("bad PID value {:?}", &record[2]),
        })?;
        let process = record[1].trim();
        if process.is_empty() {
            return Err(LoadError::CsvParse { row, message: "empty Process Name".into() });
        }
        let operation = record[3].trim().to_string();
        let path = record[4].trim();
        let object = if path.is_empty() {
            SystemEntity::new(EntityKind::System, "-")
        } else {
            SystemEntity::new(object_kind_for_op(&operation), path)
        };

        let base = *first_time.get_or_insert(time_us);
        let rel = if time_us >= base {
            time_us - base
        } else if base - time_us <= slack_us {
            0
        } else {
            return Err(LoadError::NonMonotonicTime { row });
        };
        let rel = if rel >= prev_rel {
            rel
        } else if prev_rel - rel <= slack_us {
            prev_rel
        } else {
            return Err(LoadError::NonMonotonicTime { row });
        };
        prev_rel = rel;

        events.push(Event::benign(
            rel,
            SystemEntity::new(EntityKind::Process, process),
            pid,
            operation,
            object,
            record[5].trim(),
            record[6].trim(),
        ));
    }

    let length_us = events.last().map(|e| e.time_us).unwrap_or(0);
    Ok(BenignLog { events, start_us, length_us })
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("step {step}: prefix events requested but the lapse window has no interior")]
    LapseTooSmall { step: usize },
    #[error("background pool is empty but step {step} requests prefix events")]
    EmptyBackgroundPool { step: usize },
    #[error("orphan process {pid}: no lineage path to a root")]
    OrphanProcess { pid: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("spill record parse: {0}")]
    SpillParse(String),
}

/// Per-step absolute timing, recorded for the run manifest.
#[derive(Debug, Clone)]
pub struct StepTiming {
    pub campaign_id: String,
    pub stage: Stage,
    pub ability_id: String,
    pub start_us: u64,
    pub end_us: u64,
}

/// Parent/child process relationships and lineage roots.
#[derive(Debug, Clone, Default)]
pub struct Lineage {
    pub edges: Vec<(u32, u32)>,
    pub roots: BTreeSet<u32>,
}

impl Lineage {
    /// Pids not reachable from a root via recorded edges.
    pub fn orphans(&self, subject_pids: impl IntoIterator<Item = u32>) -> Vec<u32> {
        let mut reachable = self.roots.clone();
        let mut changed = true;
        while changed {
            changed = false;
            for (parent, child) in &self.edges {
                if reachable.contains(parent) && reachable.insert(*child) {
                    changed = true;
                }
            }
        }
        let mut orphans: Vec<u32> = subject_pids
            .into_iter()
            .filter(|pid| !reachable.contains(pid))
            .collect();
        orphans.sort_unstable();
        orphans.dedup();
        orphans
    }
}

/// Name of the designated root shell process that parents technique
/// processes not created inside their template. A services.exe root pid is
/// also reserved at log creation for service-style lineage roots.
pub const ROOT_SHELL_NAME: &str = "explorer.exe";

struct PendingStep {
    events: Vec<Event>,
    subject_slots: Vec<Placeholder>,
    /// Object placeholder of each event when it is a process slot.
    object_slots: Vec<Option<Placeholder>>,
}

/// The growing synthetic log. Composition appends; `finalize` produces the
/// immutable ordered stream.
pub struct SyntheticLog {
    buffer: Vec<Event>,
    pending: Vec<PendingStep>,
    next_seq: u64,
    used_pids: HashSet<u32>,
    next_pid: u32,
    pub lineage: Lineage,
    root_shell_pid: u32,
    max_mem_events: usize,
    spill_dir: Option<tempfile::TempDir>,
    runs: Vec<PathBuf>,
    spilled_events: usize,
}

impl SyntheticLog {
    pub fn new() -> SyntheticLog {
        Self::with_mem_cap(20_000_000)
    }

    /// `max_mem_events` caps the in-memory buffer; beyond it, sorted runs
    /// spill to a temporary directory and finalize k-way merges them.
    pub fn with_mem_cap(max_mem_events: usize) -> SyntheticLog {
        let mut log = SyntheticLog {
            buffer: Vec::new(),
            pending: Vec::new(),
            next_seq: 0,
            used_pids: HashSet::new(),
            next_pid: 1000,
            lineage: Lineage::default(),
            root_shell_pid: 0,
            max_mem_events: max_mem_events.max(1),
            spill_dir: None,
            runs: Vec::new(),
            spilled_events: 0,
        };
        log.root_shell_pid = log.alloc_pid();
        log.lineage.roots.insert(log.root_shell_pid);
        let services = log.alloc_pid();
        log.lineage.roots.insert(services);
        log
    }

    pub fn len(&self) -> usize {
        self.buffer.len() + self.spilled_events + self.pending.iter().map(|p| p.events.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn alloc_pid(&mut self) -> u32 {
        while self.used_pids.contains(&self.next_pid) {
            self.next_pid += 1;
        }
        let pid = self.next_pid;
        self.used_pids.insert(pid);
        self.next_pid += 1;
        pid
    }

    fn register_root(&mut self, pid: u32) {
        self.used_pids.insert(pid);
        self.lineage.roots.insert(pid);
    }

    fn append(&mut self, mut event: Event) -> Result<(), ComposeError> {
        event.seq = self.next_seq;
        self.next_seq += 1;
        self.buffer.push(event);
        if self.buffer.len() >= self.max_mem_events {
            self.spill_run()?;
        }
        Ok(())
    }

    fn spill_run(&mut self) -> Result<(), ComposeError> {
        if self.buffer.is_empty() {
            return Ok(());
        }
        if self.spill_dir.is_none() {
            self.spill_dir = Some(tempfile::tempdir()?);
        }
        let dir = self.spill_dir.as_ref().unwrap();
        let path = dir.path().join(format!("run-{:05}.jsonl", self.runs.len()));
        self.buffer.sort_by(compare_events);
        let mut writer = BufWriter::new(File::create(&path)?);
        for event in &self.buffer {
            serde_json::to_writer(&mut writer, event)
                .map_err(|e| ComposeError::SpillParse(e.to_string()))?;
            writer.write_all(b"\n")?;
        }
        writer.flush()?;
        self.spilled_events += self.buffer.len();
        self.buffer.clear();
        self.runs.push(path);
        Ok(())
    }

    /// Compose a background layer at `start_us`: each pool event lands at
    /// `start_us + relative`.
    pub fn compose_background(&mut self, pool: &BackgroundPool, start_us: u64) -> Result<(), ComposeError> {
        for ev in &pool.events {
            let mut ev = ev.clone();
            ev.time_us += start_us;
            self.register_root(ev.pid);
            self.append(ev)?;
        }
        Ok(())
    }

    /// Compose a benign log: absolute time is the log's start plus each
    /// event's relative offset. Overlap with existing content is permitted.
    pub fn compose_benign(&mut self, ba: &BenignLog) -> Result<(), ComposeError> {
        for ev in &ba.events {
            let mut ev = ev.clone();
            ev.time_us += ba.start_us;
            self.register_root(ev.pid);
            self.append(ev)?;
        }
        Ok(())
    }

    /// Compose a planned campaign starting at `campaign_start_us`.
    ///
    /// Technique j starts at the previous technique's end plus its lapse
    /// (the campaign start plays the role of the zeroth end). Each step's
    /// benign prefix is sampled from the background pool and placed at
    /// strictly interior offsets of its lapse window. Returns per-step
    /// timing for the manifest.
    pub fn compose_malicious(
        &mut self,
        planned: &PlannedCampaign,
        campaign_start_us: u64,
        pool: &BackgroundPool,
        rng: &mut impl Rng,
    ) -> Result<Vec<StepTiming>, ComposeError> {
        let mut timings = Vec::with_capacity(planned.plan.steps.len());
        let mut prev_end = campaign_start_us;

        for (step_idx, (step, technique)) in
            planned.plan.steps.iter().zip(&planned.techniques).enumerate()
        {
            let start_us = prev_end + step.lapse_us;

            if step.prefix_len > 0 {
                if step.lapse_us < 2 {
                    return Err(ComposeError::LapseTooSmall { step: step_idx });
                }
                if pool.is_empty() {
                    return Err(ComposeError::EmptyBackgroundPool { step: step_idx });
                }
                let mut offsets: Vec<u64> = (0..step.prefix_len)
                    .map(|_| rng.gen_range(1..step.lapse_us))
                    .collect();
                offsets.sort_unstable();
                let base_idx = rng.gen_range(0..pool.events.len());
                for (k, offset) in offsets.into_iter().enumerate() {
                    let src = &pool.events[(base_idx + k) % pool.events.len()];
                    let mut ev = src.clone();
                    ev.time_us = prev_end + offset;
                    self.register_root(ev.pid);
                    self.append(ev)?;
                }
            }

            let mut events = Vec::with_capacity(technique.events.len());
            let mut subject_slots = Vec::with_capacity(technique.events.len());
            let mut object_slots = Vec::with_capacity(technique.events.len());
            for (te, ev) in step.template.events.iter().zip(&technique.events) {
                let mut ev = ev.clone();
                ev.time_us += start_us;
                events.push(ev);
                subject_slots.push(te.subject.clone());
                object_slots.push(match &te.object {
                    ObjectRef::Slot(p) if p.entity_kind() == EntityKind::Process => Some(p.clone()),
                    _ => None,
                });
            }
            let end_us = start_us + technique.span_us;
            timings.push(StepTiming {
                campaign_id: planned.plan.campaign_id.clone(),
                stage: step.stage,
                ability_id: step.template.ident.ability_id.clone(),
                start_us,
                end_us,
            });
            self.pending.push(PendingStep { events, subject_slots, object_slots });
            prev_end = end_us;
        }
        Ok(timings)
    }

    /// Assign one pid per technique process slot, ensure a ProcessCreate
    /// precedes each technique pid's first action (the in-template creation
    /// event, or a synthesized O-labeled create from the root shell), and
    /// record lineage edges.
    pub fn link_processes(&mut self) -> Result<(), ComposeError> {
        let pending = std::mem::take(&mut self.pending);
        for step in pending {
            // First subject-action index per slot.
            let mut first_action: BTreeMap<Placeholder, usize> = BTreeMap::new();
            for (idx, slot) in step.subject_slots.iter().enumerate() {
                first_action.entry(slot.clone()).or_insert(idx);
            }
            // In-template creation index per process slot.
            let mut created_at: BTreeMap<Placeholder, usize> = BTreeMap::new();
            for (idx, obj) in step.object_slots.iter().enumerate() {
                if step.events[idx].operation == "ProcessCreate" {
                    if let Some(slot) = obj {
                        created_at.entry(slot.clone()).or_insert(idx);
                    }
                }
            }

            // Pids for every process slot referenced by the step, in
            // first-appearance order for determinism.
            let mut pids: BTreeMap<Placeholder, u32> = BTreeMap::new();
            let mut order: Vec<Placeholder> = Vec::new();
            for (idx, slot) in step.subject_slots.iter().enumerate() {
                if !pids.contains_key(slot) {
                    pids.insert(slot.clone(), 0);
                    order.push(slot.clone());
                }
                if let Some(obj) = &step.object_slots[idx] {
                    if !pids.contains_key(obj) {
                        pids.insert(obj.clone(), 0);
                        order.push(obj.clone());
                    }
                }
            }
            for slot in &order {
                let pid = self.alloc_pid();
                *pids.get_mut(slot).unwrap() = pid;
            }

            // Synthesized creates for acting slots with no usable
            // in-template creation (none, or one that comes after the first
            // action).
            let mut synthesized: Vec<Event> = Vec::new();
            for (slot, &first_idx) in &first_action {
                let pid = pids[slot];
                let in_template_ok = created_at.get(slot).is_some_and(|&c| c < first_idx);
                if in_template_ok {
                    let creator_slot = &step.subject_slots[created_at[slot]];
                    self.lineage.edges.push((pids[creator_slot], pid));
                } else {
                    let entity = step.events[first_idx].subject.clone();
                    synthesized.push(Event {
                        seq: 0,
                        time_us: step.events[first_idx].time_us,
                        subject: SystemEntity::new(EntityKind::Process, ROOT_SHELL_NAME),
                        pid: self.root_shell_pid,
                        operation: "ProcessCreate".to_string(),
                        object: entity,
                        result: "SUCCESS".to_string(),
                        detail: format!("PID: {pid}"),
                        label: Label::Benign,
                        campaign_id: None,
                    });
                    self.lineage.edges.push((self.root_shell_pid, pid));
                }
            }
            // Record remaining in-template edges (created slots that also
            // act are covered above; creations of non-acting slots still
            // parent them).
            for (slot, &c) in &created_at {
                if !first_action.contains_key(slot) {
                    let creator_slot = &step.subject_slots[c];
                    self.lineage.edges.push((pids[creator_slot], pids[slot]));
                }
            }

            for ev in synthesized {
                self.append(ev)?;
            }
            let mut events = step.events;
            for (idx, ev) in events.iter_mut().enumerate() {
                ev.pid = pids[&step.subject_slots[idx]];
            }
            for ev in events {
                self.append(ev)?;
            }
        }

        // Internal guard: every malicious subject pid must now be reachable.
        let technique_pids: Vec<u32> = self
            .buffer
            .iter()
            .filter(|e| e.label.is_malicious())
            .map(|e| e.pid)
            .collect();
        if let Some(&pid) = self.lineage.orphans(technique_pids).first() {
            return Err(ComposeError::OrphanProcess { pid });
        }
        Ok(())
    }

    /// Sort, merge any spilled runs, and densely renumber `seq` in final
    /// order. The stream is immutable afterwards.
    pub fn finalize(mut self) -> Result<FinalizedLog, ComposeError> {
        if !self.pending.is_empty() {
            self.link_processes()?;
        }
        if self.runs.is_empty() {
            self.buffer.sort_by(compare_events);
            for (i, ev) in self.buffer.iter_mut().enumerate() {
                ev.seq = i as u64;
            }
            return Ok(FinalizedLog {
                events: self.buffer,
                merged_file: None,
                _spill_dir: self.spill_dir,
                len: 0,
            }
            .with_len());
        }

        // Spill the tail and k-way merge all runs.
        self.spill_run()?;
        let dir = self.spill_dir.as_ref().unwrap();
        let out_path = dir.path().join("merged.jsonl");
        let mut writer = BufWriter::new(File::create(&out_path)?);

        let mut readers: Vec<std::io::Lines<BufReader<File>>> = Vec::new();
        for path in &self.runs {
            readers.push(BufReader::new(File::open(path)?).lines());
        }
        let mut heap: BinaryHeap<Reverse<(u64, u64, usize, String)>> = BinaryHeap::new();
        for (idx, reader) in readers.iter_mut().enumerate() {
            if let Some(line) = reader.next() {
                let line = line?;
                let (time_us, seq) = peek_order(&line)?;
                heap.push(Reverse((time_us, seq, idx, line)));
            }
        }
        let mut count: u64 = 0;
        while let Some(Reverse((_, _, idx, line))) = heap.pop() {
            let mut event: Event =
                serde_json::from_str(&line).map_err(|e| ComposeError::SpillParse(e.to_string()))?;
            event.seq = count;
            count += 1;
            serde_json::to_writer(&mut writer, &event)
                .map_err(|e| ComposeError::SpillParse(e.to_string()))?;
            writer.write_all(b"\n")?;
            if let Some(next) = readers[idx].next() {
                let next = next?;
                let (time_us, seq) = peek_order(&next)?;
                heap.push(Reverse((time_us, seq, idx, next)));
            }
        }
        writer.flush()?;
        Ok(FinalizedLog {
            events: Vec::new(),
            merged_file: Some(out_path),
            _spill_dir: self.spill_dir,
            len: count as usize,
        })
    }
}

impl Default for SyntheticLog {
    fn default() -> Self {
        Self::new()
    }
}

fn peek_order(line: &str) -> Result<(u64, u64), ComposeError> {
    #[derive(serde::Deserialize)]
    struct Key {
        seq: u64,
        time_us: u64,
    }
    let key: Key =
        serde_json::from_str(line).map_err(|e| ComposeError::SpillParse(e.to_string()))?;
    Ok((key.time_us, key.seq))
}

/// The finalized, time-ordered event stream.
pub struct FinalizedLog {
    events: Vec<Event>,
    merged_file: Option<PathBuf>,
    _spill_dir: Option<tempfile::TempDir>,
    len: usize,
}

impl FinalizedLog {
    fn with_len(mut self) -> FinalizedLog {
        self.len = self.events.len();
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Events in final order. Spilled logs stream from disk; iterating may
    /// therefore fail mid-way, surfaced as a panic-free `filter_map` on the
    /// caller's side via `try_iter`.
    pub fn iter(&self) -> Box<dyn Iterator<Item = Event> + '_> {
        match &self.merged_file {
            None => Box::new(self.events.iter().cloned()),
            Some(path) => {
                let file = File::open(path).expect("merged spill file exists");
                Box::new(BufReader::new(file).lines().map(|line| {
                    let line = line.expect("spill read");
                    serde_json::from_str(&line).expect("spill record parses")
                }))
            }
        }
    }

    /// In-memory view when no spill happened (tests and small runs).
    pub fn as_slice(&self) -> Option<&[Event]> {
        if self.merged_file.is_none() {
            Some(&self.events)
        } else {
            None
        }
    }
}

/// Render one event as its seven CSV column values.
pub fn event_csv_fields(event: &Event) -> [String; 7] {
    [
        format_time_us(event.time_us),
        event.subject.value.clone(),
        event.pid.to_string(),
        event.operation.clone(),
        event.object.value.clone(),
        event.result.clone(),
        event.detail.clone(),
    ]
}
