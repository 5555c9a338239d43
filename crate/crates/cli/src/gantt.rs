//! Gantt document: machine lanes plus pallet lanes with switch-delay blocks.
//!
//! Machine lanes carry the scheduled operations. Pallet lanes show which
//! category each pallet holds over time; when a pallet is swapped, the lane
//! shows a delay block of exactly `switch_time` (switches within one kitting
//! step are serialized back to back) before the new category's segment
//! opens.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use kitshop_core::buffer::KitEvent;
use kitshop_core::env::EpisodeTrace;
use kitshop_core::instance::Instance;

pub const GANTT_FORMAT: &str = "fjsp-lb-mk-gantt";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineBlock {
    pub job: usize,
    pub op_index: usize,
    pub start: u64,
    pub end: u64,
    pub part_sorting: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MachineLane {
    pub machine: usize,
    pub part_sorting: bool,
    pub blocks: Vec<MachineBlock>,
}

/// A period during which a pallet holds one category.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalletSegment {
    pub category: usize,
    pub from: u64,
    pub to: u64,
}

/// A pallet replacement in progress; always `switch_time` long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SwitchDelay {
    pub from: u64,
    pub to: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PalletLane {
    pub pallet: usize,
    pub segments: Vec<PalletSegment>,
    pub switch_delays: Vec<SwitchDelay>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GanttDoc {
    pub format: String,
    pub version: u32,
    pub method: String,
    pub makespan: u64,
    pub switch_time: u64,
    pub total_switches: u64,
    pub machine_lanes: Vec<MachineLane>,
    pub pallet_lanes: Vec<PalletLane>,
}

#[derive(Debug)]
pub enum GanttError {
    /// The trace does not schedule every operation of the instance.
    IncompleteTrace { steps: usize, operations: usize },
}

impl std::fmt::Display for GanttError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match *self {
            GanttError::IncompleteTrace { steps, operations } => {
                write!(f, "trace has {steps} steps for {operations} operations")
            }
        }
    }
}

impl std::error::Error for GanttError {}

/// Builds the Gantt document from a complete episode trace.
pub fn export_gantt(inst: &Instance, trace: &EpisodeTrace, method: &str) -> Result<GanttDoc, GanttError> {
    if trace.steps.len() != inst.total_operations() {
        return Err(GanttError::IncompleteTrace {
            steps: trace.steps.len(),
            operations: inst.total_operations(),
        });
    }

    let mut machine_lanes: Vec<MachineLane> = (0..inst.machine_count)
        .map(|m| MachineLane {
            machine: m,
            part_sorting: inst.is_part_sorting_machine(m),
            blocks: Vec::new(),
        })
        .collect();
    for step in &trace.steps {
        machine_lanes[step.machine].blocks.push(MachineBlock {
            job: step.job,
            op_index: step.op_index,
            start: step.start,
            end: step.end,
            part_sorting: step.part_sorting,
        });
    }
    for lane in &mut machine_lanes {
        lane.blocks.sort_by_key(|b| b.start);
    }

    // Pallet lanes: replay kitting events. Within one kitting step the
    // switches run serially from the step's start; a claimed empty pallet
    // opens its segment at the step's start.
    let mut open: Vec<Option<PalletSegment>> = vec![None; inst.pallet_count];
    let mut lanes: Vec<PalletLane> = (0..inst.pallet_count)
        .map(|p| PalletLane { pallet: p, segments: Vec::new(), switch_delays: Vec::new() })
        .collect();
    for step in &trace.steps {
        let mut switch_index = 0u64;
        for event in &step.kit_events {
            match *event {
                KitEvent::Switch { pallet, new_category, .. } => {
                    let delay_from = step.start + switch_index * inst.switch_time;
                    let delay_to = delay_from + inst.switch_time;
                    switch_index += 1;
                    if let Some(mut seg) = open[pallet].take() {
                        seg.to = delay_from;
                        if seg.to > seg.from {
                            lanes[pallet].segments.push(seg);
                        }
                    }
                    lanes[pallet].switch_delays.push(SwitchDelay { from: delay_from, to: delay_to });
                    open[pallet] =
                        Some(PalletSegment { category: new_category, from: delay_to, to: delay_to });
                }
                KitEvent::Claim { pallet, category } => {
                    open[pallet] =
                        Some(PalletSegment { category, from: step.start, to: step.start });
                }
                KitEvent::Place { .. } => {}
            }
        }
    }
    for (pallet, seg) in open.into_iter().enumerate() {
        if let Some(mut seg) = seg {
            seg.to = trace.makespan.max(seg.from);
            if seg.to > seg.from {
                lanes[pallet].segments.push(seg);
            }
        }
    }

    Ok(GanttDoc {
        format: GANTT_FORMAT.into(),
        version: super::formats::VERSION,
        method: method.to_string(),
        makespan: trace.makespan,
        switch_time: inst.switch_time,
        total_switches: trace.total_switches,
        machine_lanes,
        pallet_lanes: lanes,
    })
}

pub fn save_gantt(doc: &GanttDoc) -> String {
    let mut out = serde_json::to_string_pretty(doc).expect("serializable");
    out.push('\n');
    out
}

pub fn load_gantt(text: &str) -> Result<GanttDoc, serde_json::Error> {
    serde_json::from_str(text)
}

fn color(index: usize) -> String {
    // Spread hues around the wheel; stays readable for a few dozen ids.
    let hue = (index as f64 * 137.508) % 360.0;
    format!("hsl({hue:.1}, 65%, 60%)")
}

/// Renders the document as a static SVG image: machine lanes on top, pallet
/// lanes below, operation blocks colored by job, pallet segments by
/// category, and switch delays as white blocks.
pub fn render_svg(doc: &GanttDoc) -> String {
    const ROW: f64 = 26.0;
    const GAP: f64 = 6.0;
    const LEFT: f64 = 70.0;
    const WIDTH: f64 = 900.0;
    let span = doc.makespan.max(1) as f64;
    let x = |t: u64| LEFT + (t as f64 / span) * (WIDTH - LEFT - 10.0);
    let rows = doc.machine_lanes.len() + doc.pallet_lanes.len();
    let height = 40.0 + rows as f64 * (ROW + GAP) + 20.0;

    let mut svg = String::new();
    let _ = writeln!(
        svg,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{WIDTH}\" height=\"{height:.0}\" font-family=\"sans-serif\" font-size=\"10\">"
    );
    let _ = writeln!(
        svg,
        "<text x=\"{LEFT}\" y=\"16\">makespan {} | pallet switches {}</text>",
        doc.makespan, doc.total_switches
    );

    let mut y = 30.0;
    for lane in &doc.machine_lanes {
        let tag = if lane.part_sorting { " (ps)" } else { "" };
        let _ = writeln!(svg, "<text x=\"4\" y=\"{:.1}\">M{}{}</text>", y + ROW * 0.65, lane.machine, tag);
        for b in &lane.blocks {
            let (x0, x1) = (x(b.start), x(b.end));
            let _ = writeln!(
                svg,
                "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{ROW}\" fill=\"{}\" stroke=\"#333\"/>",
                (x1 - x0).max(1.0),
                color(b.job)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\">{}.{}</text>",
                x0 + 2.0,
                y + ROW * 0.65,
                b.job,
                b.op_index
            );
        }
        y += ROW + GAP;
    }
    for lane in &doc.pallet_lanes {
        let _ = writeln!(svg, "<text x=\"4\" y=\"{:.1}\">P{}</text>", y + ROW * 0.65, lane.pallet);
        for seg in &lane.segments {
            let (x0, x1) = (x(seg.from), x(seg.to));
            let _ = writeln!(
                svg,
                "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{ROW}\" fill=\"{}\" stroke=\"#333\"/>",
                (x1 - x0).max(1.0),
                color(100 + seg.category)
            );
            let _ = writeln!(
                svg,
                "<text x=\"{:.1}\" y=\"{:.1}\">T{}</text>",
                x0 + 2.0,
                y + ROW * 0.65,
                seg.category
            );
        }
        for d in &lane.switch_delays {
            let (x0, x1) = (x(d.from), x(d.to));
            let _ = writeln!(
                svg,
                "<rect x=\"{x0:.1}\" y=\"{y:.1}\" width=\"{:.1}\" height=\"{ROW}\" fill=\"white\" stroke=\"#999\" stroke-dasharray=\"3,2\"/>",
                (x1 - x0).max(1.0)
            );
        }
        y += ROW + GAP;
    }
    svg.push_str("</svg>\n");
    svg
}

pub fn write_gantt(path: &Path, doc: &GanttDoc) -> std::io::Result<()> {
    std::fs::write(path, save_gantt(doc))
}
