//! Wavefront OBJ export with one group per face id.

use std::collections::HashMap;
use std::fmt::Write;

use super::solid::Solid;

/// Formats `x` with 9 significant digits, without trailing zeros.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x.is_finite() { "0".into() } else { format!("{x}") };
    }
    let sci = format!("{x:.8e}");
    let (mant, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        let s = format!("{x:.decimals$}");
        let s = if s.contains('.') { s.trim_end_matches('0').trim_end_matches('.').to_string() } else { s };
        if s == "-0" { "0".into() } else { s }
    } else {
        let m = if mant.contains('.') { mant.trim_end_matches('0').trim_end_matches('.') } else { mant };
        format!("{m}e{exp}")
    }
}

/// Serializes bodies as OBJ text: deduplicated vertices, then one `g`
/// group per face id in first-appearance order, triangles only.
pub fn write_obj(bodies: &[Solid]) -> String {
    let mut vertex_ids: HashMap<String, usize> = HashMap::new();
    let mut vertex_lines: Vec<String> = Vec::new();
    let mut groups: Vec<(String, Vec<[usize; 3]>)> = Vec::new();
    let mut group_slot: HashMap<String, usize> = HashMap::new();
    for s in bodies {
        let map: Vec<usize> = s
            .vertices
            .iter()
            .map(|v| {
                let line = format!("v {} {} {}", fmt_sig9(v.x), fmt_sig9(v.y), fmt_sig9(v.z));
                let n = vertex_ids.len();
                *vertex_ids.entry(line.clone()).or_insert_with(|| {
                    vertex_lines.push(line);
                    n + 1
                })
            })
            .collect();
        for (t, tri) in s.triangles.iter().enumerate() {
            let id = &s.tag(t).face_id;
            let g = *group_slot.entry(id.clone()).or_insert_with(|| {
                groups.push((id.clone(), Vec::new()));
                groups.len() - 1
            });
            groups[g].1.push(tri.map(|i| map[i as usize]));
        }
    }
    let mut out = String::new();
    for l in &vertex_lines {
        out.push_str(l);
        out.push('\n');
    }
    for (id, tris) in &groups {
        let _ = writeln!(out, "g {id}");
        for [a, b, c] in tris {
            if a != b && b != c && a != c {
                let _ = writeln!(out, "f {a} {b} {c}");
            }
        }
    }
    out
}
