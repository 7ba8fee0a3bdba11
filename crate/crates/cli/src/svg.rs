//! Time-mesh diagrams: three horizontal node rows per partition, fluid on
//! top (blue), the macro mesh in the middle (black), solid at the bottom
//! (red).

use heatwave::TimePartition;
use std::fmt::Write;

const WIDTH: f64 = 800.0;
const MARGIN: f64 = 30.0;
const ROW_Y: [f64; 3] = [40.0, 90.0, 140.0];
const TICK: f64 = 12.0;

/// Renders the partition as an SVG document.
pub fn render_time_mesh(partition: &TimePartition) -> String {
    let horizon = partition.horizon;
    let x = |t: f64| MARGIN + (WIDTH - 2.0 * MARGIN) * t / horizon;
    let mut out = String::new();
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="180" viewBox="0 0 {WIDTH} 180">"#
    )
    .unwrap();
    let rows: [(&str, &str, Vec<f64>); 3] = [
        ("fluid", "#1f77b4", partition.fluid.node_times.clone()),
        ("macro", "#000000", partition.macro_times.clone()),
        ("solid", "#d62728", partition.solid.node_times.clone()),
    ];
    for ((label, color, times), y) in rows.into_iter().zip(ROW_Y) {
        writeln!(
            out,
            r#"  <line class="axis-{label}" x1="{:.2}" y1="{y}" x2="{:.2}" y2="{y}" stroke="{color}" stroke-width="1"/>"#,
            x(0.0),
            x(horizon)
        )
        .unwrap();
        for t in times {
            writeln!(
                out,
                r#"  <line class="tick-{label}" x1="{0:.4}" y1="{1}" x2="{0:.4}" y2="{2}" stroke="{color}" stroke-width="1.5"/>"#,
                x(t),
                y - 0.5 * TICK,
                y + 0.5 * TICK
            )
            .unwrap();
        }
        writeln!(
            out,
            r#"  <text x="4" y="{}" font-size="11" fill="{color}">{label}</text>"#,
            y + 4.0
        )
        .unwrap();
    }
    out.push_str("</svg>\n");
    out
}
