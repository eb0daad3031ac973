//! Seeded synthetic timing fixtures with planted anomalies.
//!
//! All quantities are drawn as integers (ps, 0.1 ohm, 0.001 fF) and divided
//! on output, so every number in a generated report has a short decimal
//! form. Clean values stay far from every analysis threshold; each planted
//! anomaly crosses its threshold by a wide margin, which makes the manifest
//! the exact expected output of each analysis.

use std::collections::BTreeSet;
use std::fmt::{self, Write as _};
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::analysis::{stage_ref, AnomalyKey, AnomalyKind};
use super::report::{render_timing_report, Aggressor, Check, ClockEdges, Stage, TimingPath, TimingReport};
use super::EdaError;
use crate::par::Exec;

pub const MODE: &str = "func";
pub const M2_RATIO: f64 = 5.0;
pub const M3_THRESHOLD: f64 = 2.0;
pub const M4_THRESHOLD: f64 = 3.0;
pub const M5_TOP_K: usize = 3;
pub const M5_MIN_DELAY: f64 = 0.2;
pub const MANIFEST_FILE: &str = "manifest.txt";

const CORNERS: [&str; 6] = ["tt_0p80v_25c", "ss_0p72v_125c", "ff_0p88v_m40c", "ss_0p72v_m40c", "ff_0p88v_125c", "tt_0p80v_85c"];
const CELLS: [&str; 8] = ["INVX1", "NAND2X1", "BUFX2", "AOI21X1", "NOR2X1", "XOR2X1", "MUX2X1", "OAI22X1"];
const CLOCKS: [&str; 3] = ["clk_core", "clk_io", "clk_mem"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskId {
    M1,
    M2,
    M3,
    M4,
    M5,
    M6,
    M7,
}

impl TaskId {
    pub const ALL: [TaskId; 7] = [TaskId::M1, TaskId::M2, TaskId::M3, TaskId::M4, TaskId::M5, TaskId::M6, TaskId::M7];

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.to_string() == s)
    }

    /// Blackboard key an agent stores this task's findings under.
    pub fn findings_key(self) -> String {
        format!("{}_findings", self.to_string().to_lowercase())
    }
}

impl fmt::Display for TaskId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "M{}", *self as u8 + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub corners: usize,
    pub paths: usize,
    /// Stages per path are drawn from `2..=max_stages`.
    pub max_stages: usize,
    pub seed: u64,
    /// Skip every planted anomaly.
    pub clean: bool,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self { corners: 3, paths: 8, max_stages: 6, seed: 0, clean: false }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Planted {
    pub task: TaskId,
    pub path_id: String,
    /// `-`, a stage index, or `a+b` for a stage pair.
    pub stage: String,
    pub kind: AnomalyKind,
}

impl Planted {
    pub fn key(&self) -> AnomalyKey {
        AnomalyKey { kind: self.kind, path_id: self.path_id.clone(), stage: self.stage.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub tasks: Vec<TaskId>,
    pub max_report: String,
    pub eco_report: String,
    pub min_report: String,
    pub m7_paths: Vec<String>,
    pub m7_stages: Vec<usize>,
    pub entries: Vec<Planted>,
}

impl Manifest {
    /// Sorted planted keys of one task.
    pub fn planted(&self, task: TaskId) -> Vec<AnomalyKey> {
        let mut keys: Vec<AnomalyKey> = self.entries.iter().filter(|e| e.task == task).map(Planted::key).collect();
        keys.sort();
        keys
    }

    pub fn render(&self) -> String {
        let mut out = String::from("# planted anomalies: <task> <path> <stage|a+b|-> <kind>\n");
        let tasks: Vec<String> = self.tasks.iter().map(|t| t.to_string()).collect();
        let _ = writeln!(out, "#tasks {}", tasks.join(" "));
        let _ = writeln!(out, "# report max={} eco={} min={}", self.max_report, self.eco_report, self.min_report);
        let stages: Vec<String> = self.m7_stages.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "# m7 paths={} stages={}", self.m7_paths.join(","), stages.join(","));
        for e in &self.entries {
            let _ = writeln!(out, "{} {} {} {}", e.task, e.path_id, e.stage, e.kind);
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, EdaError> {
        let mut m = Manifest {
            tasks: Vec::new(),
            max_report: String::new(),
            eco_report: String::new(),
            min_report: String::new(),
            m7_paths: Vec::new(),
            m7_stages: Vec::new(),
            entries: Vec::new(),
        };
        let mut saw_tasks = false;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.trim();
            let bad = |msg: &str| EdaError::Manifest { line: i + 1, message: format!("{msg}: {line:?}") };
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix("#tasks") {
                m.tasks = rest.split_whitespace().map(|t| TaskId::parse(t).ok_or_else(|| bad("unknown task"))).collect::<Result<_, _>>()?;
                saw_tasks = true;
                continue;
            }
            if let Some(rest) = line.strip_prefix("# report ") {
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("max", v)) => m.max_report = v.into(),
                        Some(("eco", v)) => m.eco_report = v.into(),
                        Some(("min", v)) => m.min_report = v.into(),
                        _ => return Err(bad("expected max=, eco= or min=")),
                    }
                }
                continue;
            }
            if let Some(rest) = line.strip_prefix("# m7 ") {
                for kv in rest.split_whitespace() {
                    match kv.split_once('=') {
                        Some(("paths", v)) => m.m7_paths = v.split(',').filter(|s| !s.is_empty()).map(String::from).collect(),
                        Some(("stages", v)) => {
                            m.m7_stages = v
                                .split(',')
                                .filter(|s| !s.is_empty())
                                .map(|s| s.parse().map_err(|_| bad("bad stage index")))
                                .collect::<Result<_, _>>()?
                        }
                        _ => return Err(bad("expected paths= or stages=")),
                    }
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [task, path, stage, kind] = parts[..] else { return Err(bad("expected 4 fields")) };
            m.entries.push(Planted {
                task: TaskId::parse(task).ok_or_else(|| bad("unknown task"))?,
                path_id: path.into(),
                stage: stage.into(),
                kind: AnomalyKind::parse(kind).ok_or_else(|| bad("unknown anomaly kind"))?,
            });
        }
        if !saw_tasks {
            return Err(EdaError::Manifest { line: 0, message: "missing #tasks header".into() });
        }
        Ok(m)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FixtureSet {
    pub corners: Vec<String>,
    /// `(file name, report)` pairs sorted by file name.
    pub files: Vec<(String, TimingReport)>,
    pub manifest: Manifest,
}

impl FixtureSet {
    pub fn report(&self, file: &str) -> Option<&TimingReport> {
        self.files.iter().find(|(f, _)| f == file).map(|(_, r)| r)
    }

    pub fn max_report(&self) -> &TimingReport {
        self.report(&self.manifest.max_report).expect("generated set holds its max report")
    }

    pub fn eco_report(&self) -> &TimingReport {
        self.report(&self.manifest.eco_report).expect("generated set holds its eco report")
    }

    pub fn min_report(&self) -> &TimingReport {
        self.report(&self.manifest.min_report).expect("generated set holds its min report")
    }

    /// Setup reports of every corner, in corner order.
    pub fn corner_reports(&self) -> Vec<&TimingReport> {
        self.corners.iter().filter_map(|c| self.report(&max_file(c))).collect()
    }

    /// Writes every report plus `manifest.txt` into `dir`.
    pub fn write_to(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        for (name, report) in &self.files {
            std::fs::write(dir.join(name), render_timing_report(report))?;
        }
        std::fs::write(dir.join(MANIFEST_FILE), self.manifest.render())
    }
}

pub fn max_file(corner: &str) -> String {
    format!("{corner}.max.rpt")
}

fn corner_name(i: usize) -> String {
    match CORNERS.get(i) {
        Some(c) => c.to_string(),
        None => format!("c{i:02}_0p80v_25c"),
    }
}

struct RawStage {
    cell: &'static str,
    r_dohm: i64,
    c_mff: i64,
    delay_ps: i64,
    lc_ps: i64,
    xtd_ps: i64,
    aggr: Vec<(String, i64)>,
}

struct RawPath {
    id: String,
    clk: &'static str,
    edges: ClockEdges,
    setup_margin_ps: i64,
    hold_margin_ps: i64,
    stages: Vec<RawStage>,
}

fn ns(ps: i64) -> f64 {
    ps as f64 / 1000.0
}

fn draw_design(rng: &mut ChaCha8Rng, spec: &FixtureSpec) -> Vec<RawPath> {
    (0..spec.paths)
        .map(|p| {
            let n = rng.random_range(2..=spec.max_stages);
            let stages = (0..n)
                .map(|s| {
                    let n_aggr = rng.random_range(0..=2);
                    RawStage {
                        cell: CELLS[rng.random_range(0..CELLS.len())],
                        r_dohm: rng.random_range(100..=200),
                        c_mff: rng.random_range(1000..=2000),
                        delay_ps: rng.random_range(10..=100),
                        lc_ps: rng.random_range(20..=50),
                        xtd_ps: rng.random_range(0..=4),
                        aggr: (0..n_aggr).map(|k| (format!("agg_p{p:03}_{s}_{k}"), rng.random_range(50..=300))).collect(),
                    }
                })
                .collect();
            let edges = match rng.random_range(0..3) {
                0 => ClockEdges { rise: true, fall: false },
                1 => ClockEdges { rise: false, fall: true },
                _ => ClockEdges::BOTH,
            };
            RawPath {
                id: format!("p{p:03}"),
                clk: CLOCKS[rng.random_range(0..CLOCKS.len())],
                edges,
                setup_margin_ps: rng.random_range(-60..=200),
                hold_margin_ps: rng.random_range(5..=150),
                stages,
            }
        })
        .collect()
}

fn pick(rng: &mut ChaCha8Rng, n: usize, max_k: usize) -> Vec<usize> {
    let k = rng.random_range(1..=max_k.min(n));
    let mut v = sample(rng, n, k).into_vec();
    v.sort_unstable();
    v
}

fn build_report(design: &[RawPath], corner: &str, check: Check, derate_pct: i64) -> TimingReport {
    let paths = design
        .iter()
        .map(|p| {
            let base: i64 = p.stages.iter().map(|s| s.delay_ps).sum();
            let delays: Vec<i64> = p.stages.iter().map(|s| (s.delay_ps * derate_pct + 50) / 100).collect();
            let arrival: i64 = delays.iter().sum();
            let slack_ps = match check {
                Check::Max => base + p.setup_margin_ps - arrival,
                Check::Min => arrival - (base - p.hold_margin_ps),
            };
            let stages = p
                .stages
                .iter()
                .zip(delays)
                .enumerate()
                .map(|(i, (s, d))| Stage {
                    index: i,
                    net: format!("{}_n{i}", p.id),
                    cell: s.cell.to_string(),
                    resistance: s.r_dohm as f64 / 10.0,
                    capacitance: ns(s.c_mff),
                    delay: ns(d),
                    constraint: ns(s.lc_ps),
                    xtalk_delta: ns(s.xtd_ps),
                    aggressors: s.aggr.iter().map(|(net, c)| Aggressor { net: net.clone(), coupling_cap: ns(*c) }).collect(),
                })
                .collect();
            TimingPath {
                path_id: p.id.clone(),
                startpoint: format!("ff_{}_launch/Q", p.id),
                endpoint: format!("ff_{}_capture/D", p.id),
                clock_net: p.clk.to_string(),
                clock_edges: p.edges,
                slack: ns(slack_ps),
                stages,
            }
        })
        .collect();
    TimingReport { corner: corner.to_string(), mode: MODE.to_string(), check, paths }
}

/// Generates one fixture set. Identical specs give identical sets.
pub fn generate(spec: &FixtureSpec) -> Result<FixtureSet, EdaError> {
    if spec.corners == 0 || spec.paths == 0 || spec.max_stages < 2 {
        return Err(EdaError::BadFixtureSpec(format!(
            "need corners >= 1, paths >= 1 and max_stages >= 2, got {} / {} / {}",
            spec.corners, spec.paths, spec.max_stages
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut design = draw_design(&mut rng, spec);
    let corners: Vec<String> = (0..spec.corners).map(corner_name).collect();
    let derates: Vec<i64> = (0..spec.corners).map(|i| if i == 0 { 100 } else { rng.random_range(85..=125) }).collect();
    let all_stages: Vec<(usize, usize)> =
        design.iter().enumerate().flat_map(|(p, path)| (0..path.stages.len()).map(move |s| (p, s))).collect();
    let mut entries: Vec<Planted> = Vec::new();
    let mut plant = |task, p: usize, stage: String, kind, design: &[RawPath]| {
        entries.push(Planted { task, path_id: design[p].id.clone(), stage, kind });
    };

    let mut eco_change: Option<(usize, usize, Option<usize>)> = None;
    let mut m7_paths = vec![design[0].id.clone()];
    let mut m7_stages = vec![0, 1];
    if !spec.clean {
        for p in pick(&mut rng, spec.paths, 2) {
            design[p].edges = ClockEdges::NONE;
            plant(TaskId::M1, p, "-".into(), AnomalyKind::MissingClockEdge, &design);
        }
        let mut m2_plants = Vec::new();
        for p in pick(&mut rng, spec.paths, 2) {
            let s = rng.random_range(0..design[p].stages.len());
            design[p].stages[s].r_dohm = rng.random_range(1500..=2000);
            m2_plants.push((p, s));
            for t in (0..design[p].stages.len()).filter(|t| *t != s) {
                plant(TaskId::M2, p, stage_ref(Some(s), Some(t)), AnomalyKind::RcMismatch, &design);
            }
        }
        let m3: Vec<(usize, usize)> = pick(&mut rng, all_stages.len(), 2).into_iter().map(|i| all_stages[i]).collect();
        for &(p, s) in &m3 {
            let st = &mut design[p].stages[s];
            st.xtd_ps = st.lc_ps * rng.random_range(3..=5);
            plant(TaskId::M3, p, s.to_string(), AnomalyKind::XtalkConstraint, &design);
        }
        for i in pick(&mut rng, all_stages.len(), 2) {
            let (p, s) = all_stages[i];
            let id = design[p].id.clone();
            let st = &mut design[p].stages[s];
            if st.aggr.is_empty() {
                st.aggr.push((format!("agg_{id}_{s}_x"), 0));
            }
            st.aggr[0].1 = st.c_mff * rng.random_range(4..=6);
            plant(TaskId::M4, p, s.to_string(), AnomalyKind::AggressorRc, &design);
        }
        let m5 = pick(&mut rng, all_stages.len(), M5_TOP_K);
        let delays = sample(&mut rng, 501, m5.len()).into_vec();
        for (i, d) in m5.into_iter().zip(delays) {
            let (p, s) = all_stages[i];
            design[p].stages[s].delay_ps = 500 + d as i64;
            plant(TaskId::M5, p, s.to_string(), AnomalyKind::SlowStageConstraint, &design);
        }
        let pa = rng.random_range(0..spec.paths);
        let sa = rng.random_range(0..design[pa].stages.len());
        let pb = (spec.paths > 1).then(|| (pa + rng.random_range(1..spec.paths)) % spec.paths);
        eco_change = Some((pa, sa, pb));
        plant(TaskId::M6, pa, sa.to_string(), AnomalyKind::TableMismatch, &design);
        plant(TaskId::M6, pa, "-".into(), AnomalyKind::TableMismatch, &design);
        if let Some(pb) = pb {
            plant(TaskId::M6, pb, "-".into(), AnomalyKind::TableMismatch, &design);
        }

        let (pm, s2) = m2_plants[0];
        let n = design[pm].stages.len();
        let t = (s2 + rng.random_range(1..n)) % n;
        let (p3, s3) = m3[0];
        let paths: BTreeSet<usize> = [pm, p3].into();
        let stages: BTreeSet<usize> = [s2, t, s3].into();
        for &(p, s) in &m2_plants {
            if !paths.contains(&p) || !stages.contains(&s) {
                continue;
            }
            for &u in stages.iter().filter(|u| **u != s && **u < design[p].stages.len()) {
                plant(TaskId::M7, p, stage_ref(Some(s), Some(u)), AnomalyKind::RcMismatch, &design);
            }
        }
        for &(p, s) in &m3 {
            if paths.contains(&p) && stages.contains(&s) {
                plant(TaskId::M7, p, s.to_string(), AnomalyKind::XtalkConstraint, &design);
            }
        }
        m7_paths = paths.iter().map(|p| design[*p].id.clone()).collect();
        m7_stages = stages.into_iter().collect();
    }

    let primary = &corners[0];
    let mut files: Vec<(String, TimingReport)> = corners
        .iter()
        .zip(&derates)
        .map(|(c, d)| (max_file(c), build_report(&design, c, Check::Max, *d)))
        .collect();
    files.push((format!("{primary}.min.rpt"), build_report(&design, primary, Check::Min, 100)));
    let mut eco = files[0].1.clone();
    if let Some((pa, sa, pb)) = eco_change {
        let path = &mut eco.paths[pa];
        path.stages[sa].delay = ns(design[pa].stages[sa].delay_ps + 10);
        path.slack = ns((path.slack * 1000.0).round() as i64 - 10);
        if let Some(pb) = pb {
            eco.paths.remove(pb);
        }
    }
    files.push((format!("{primary}.max.eco.rpt"), eco));
    files.sort_by(|a, b| a.0.cmp(&b.0));

    entries.sort();
    let manifest = Manifest {
        tasks: TaskId::ALL.to_vec(),
        max_report: max_file(primary),
        eco_report: format!("{primary}.max.eco.rpt"),
        min_report: format!("{primary}.min.rpt"),
        m7_paths,
        m7_stages,
        entries,
    };
    Ok(FixtureSet { corners, files, manifest })
}

/// Generates many fixture sets under the chosen execution strategy.
pub fn generate_batch(exec: Exec, specs: &[FixtureSpec]) -> Vec<Result<FixtureSet, EdaError>> {
    exec.map(specs, generate)
}
