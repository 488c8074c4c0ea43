//! Schedule chart (SVG and ASCII) and GeoJSON export.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde_json::{json, Value};

use crate::cluster::{Location, LocationId};
use crate::ingest::Track;
use crate::schedule::{SegmentGrid, WEEKDAYS};

pub const CELL_W: f64 = 120.0;
pub const CELL_H: f64 = 14.0;
const MARGIN_LEFT: f64 = 56.0;
const MARGIN_TOP: f64 = 24.0;
const LEGEND_ROW: f64 = 18.0;
const ASCII_WIDTH: usize = 10;

pub const PALETTE: [&str; 12] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf", "#393b79", "#b5cf6b",
];

pub fn color_for(id: LocationId) -> &'static str {
    PALETTE[id.0 as usize % PALETTE.len()]
}

pub fn letter_for(id: LocationId) -> char {
    char::from(b'A' + (id.0 % 26) as u8)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedSchedule {
    pub svg: String,
    pub ascii: String,
}

fn hhmm(minute: u32) -> String {
    format!("{:02}:{:02}", minute / 60, minute % 60)
}

/// Block widths are `p * CELL_W`, laid left to right in location id order.
/// An empty grid renders only the legend frame.
pub fn render_schedule(grid: &SegmentGrid) -> RenderedSchedule {
    let locations = grid.locations();
    let rows = if grid.is_empty() { 0 } else { grid.segments() };
    RenderedSchedule {
        svg: render_svg(grid, rows, &locations),
        ascii: render_ascii(grid, rows, &locations),
    }
}

fn render_svg(grid: &SegmentGrid, rows: usize, locations: &BTreeSet<LocationId>) -> String {
    let chart_h = MARGIN_TOP + rows as f64 * CELL_H;
    let width = MARGIN_LEFT + 7.0 * CELL_W + 8.0;
    let height = chart_h + 12.0 + LEGEND_ROW * locations.len().max(1) as f64;
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width:.0}" height="{height:.0}" font-family="sans-serif" font-size="10">"#
    );
    if rows > 0 {
        for (d, day) in WEEKDAYS.iter().enumerate() {
            let x = MARGIN_LEFT + d as f64 * CELL_W;
            let _ = writeln!(
                s,
                r#"<text x="{:.1}" y="{:.1}" text-anchor="middle">{day}</text>"#,
                x + CELL_W / 2.0,
                MARGIN_TOP - 8.0
            );
        }
        for seg in 0..rows {
            let y = MARGIN_TOP + seg as f64 * CELL_H;
            let minute = seg as u32 * grid.segment_minutes;
            if minute.is_multiple_of(60) {
                let _ = writeln!(
                    s,
                    r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{}</text>"#,
                    MARGIN_LEFT - 4.0,
                    y + CELL_H - 3.0,
                    hhmm(minute)
                );
            }
            for (d, day) in WEEKDAYS.iter().enumerate() {
                let x0 = MARGIN_LEFT + d as f64 * CELL_W;
                let _ = writeln!(
                    s,
                    r##"<rect class="cell" x="{x0:.3}" y="{y:.3}" width="{CELL_W:.3}" height="{CELL_H:.3}" fill="none" stroke="#dddddd"/>"##
                );
                let mut x = x0;
                for &(loc, p) in &grid.cells[d][seg] {
                    let w = p * CELL_W;
                    let _ = writeln!(
                        s,
                        r#"<rect class="block" data-day="{day}" data-segment="{seg}" data-location="{loc}" x="{x:.3}" y="{y:.3}" width="{w:.3}" height="{CELL_H:.3}" fill="{}"/>"#,
                        color_for(loc)
                    );
                    x += w;
                }
            }
        }
    }
    let mut y = chart_h + 12.0;
    for &loc in locations {
        let _ = writeln!(
            s,
            r#"<rect class="legend" data-location="{loc}" x="{MARGIN_LEFT:.3}" y="{y:.3}" width="12.000" height="12.000" fill="{}"/>"#,
            color_for(loc)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}">location {loc}</text>"#,
            MARGIN_LEFT + 18.0,
            y + 10.0
        );
        y += LEGEND_ROW;
    }
    s.push_str("</svg>\n");
    s
}

fn ascii_cell(cell: &[(LocationId, f64)]) -> String {
    let mut out = String::with_capacity(ASCII_WIDTH);
    for &(loc, p) in cell {
        let n = (p * ASCII_WIDTH as f64).round() as usize;
        for _ in 0..n.min(ASCII_WIDTH - out.len()) {
            out.push(letter_for(loc));
        }
    }
    while out.len() < ASCII_WIDTH {
        out.push('.');
    }
    out
}

fn render_ascii(grid: &SegmentGrid, rows: usize, locations: &BTreeSet<LocationId>) -> String {
    let mut s = String::new();
    if rows > 0 {
        s.push_str("      ");
        for day in WEEKDAYS {
            let _ = write!(s, " {:<width$}", day.to_string(), width = ASCII_WIDTH);
        }
        s.push('\n');
        for seg in 0..rows {
            s.push_str(&hhmm(seg as u32 * grid.segment_minutes));
            s.push(' ');
            for d in 0..7 {
                s.push(' ');
                s.push_str(&ascii_cell(&grid.cells[d][seg]));
            }
            s.push('\n');
        }
        s.push('\n');
    }
    for &loc in locations {
        let _ = writeln!(s, "{} = location {loc}", letter_for(loc));
    }
    s
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// FeatureCollection with one Point per location and an optional track LineString.
pub fn export_geojson(locations: &[Location], track: Option<&Track>) -> String {
    let mut sorted: Vec<&Location> = locations.iter().collect();
    sorted.sort_by_key(|l| l.id);
    let mut features: Vec<Value> = sorted
        .into_iter()
        .map(|l| {
            json!({
                "type": "Feature",
                "geometry": {
                    "type": "Point",
                    "coordinates": [round6(l.center.lon()), round6(l.center.lat())],
                },
                "properties": {
                    "id": l.id.0,
                    "radius_m": l.radius_m,
                    "member_count": l.member_count,
                },
            })
        })
        .collect();
    if let Some(track) = track.filter(|t| t.len() >= 2) {
        let coords: Vec<Value> = track
            .fixes()
            .iter()
            .map(|f| json!([round6(f.point.lon()), round6(f.point.lat())]))
            .collect();
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "LineString", "coordinates": coords },
            "properties": { "kind": "track" },
        }));
    }
    let doc = json!({ "type": "FeatureCollection", "features": features });
    let mut out = serde_json::to_string_pretty(&doc).expect("json serializes");
    out.push('\n');
    out
}
