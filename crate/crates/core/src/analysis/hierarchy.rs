//! Pass/fail monitor for the bootstrap energy hierarchy and the sup-norm chain.

use serde::Serialize;

use super::radial_table::{DiagnosticTables, MultiIndex, SupKind, SupSpec};
use super::{fit_power_law, AnalysisError, FieldId, HierarchySpec};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyLine {
    pub id: String,
    pub target: f64,
    /// Largest fitted exponent over the members; `None` when every member vanishes.
    pub fitted: Option<f64>,
    pub width: Option<f64>,
    pub pass: bool,
    /// Smallest `C1` with `value ≤ C1 ε s^target` over the table.
    pub c1_needed: Option<f64>,
    pub members: usize,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HierarchyReport {
    pub lines: Vec<HierarchyLine>,
}

impl HierarchyReport {
    pub fn pass(&self) -> bool {
        self.lines.iter().all(|l| l.pass)
    }

    pub fn line(&self, id: &str) -> Option<&HierarchyLine> {
        self.lines.iter().find(|l| l.id == id)
    }
}

fn v(p: f64, q: f64, field: FieldId, index: MultiIndex, kind: SupKind) -> SupSpec {
    SupSpec { field, index, kind, p, q }
}

struct LineDef {
    id: String,
    target: f64,
    /// Each member is a sum of one or more series.
    members: Vec<Vec<Source>>,
}

#[derive(Clone, Copy)]
enum Source {
    Energy(FieldId, MultiIndex, f64),
    Sup(SupSpec),
}

fn line_defs(spec: &HierarchySpec) -> Vec<LineDef> {
    let n = spec.n;
    let d = spec.delta;
    let all = MultiIndex::all(n);
    let low: Vec<MultiIndex> = all.iter().copied().filter(|i| i.order() + 4 <= n).collect();
    let mut out = Vec::new();
    for k in 0..=n {
        let members: Vec<Vec<Source>> = all
            .iter()
            .filter(|i| i.k == k)
            .map(|&i| vec![Source::Energy(FieldId::U, i, 0.0), Source::Energy(FieldId::V, i, -0.5)])
            .collect();
        out.push(LineDef { id: format!("energy-top k={k}"), target: k as f64 * d, members });
    }
    out.push(LineDef {
        id: "energy-low-u".into(),
        target: 0.0,
        members: low.iter().map(|&i| vec![Source::Energy(FieldId::U, i, 0.0)]).collect(),
    });
    for k in 0..=n.saturating_sub(4) {
        out.push(LineDef {
            id: format!("energy-low-v k={k}"),
            target: k as f64 * d,
            members: low.iter().filter(|i| i.k == k).map(|&i| vec![Source::Energy(FieldId::V, i, 0.0)]).collect(),
        });
    }
    // first wave bound: |I|+|J| ≤ N−7
    for k in 0..=n.saturating_sub(7) {
        let p = (k + 4) as f64 * d;
        out.push(LineDef {
            id: format!("sup1-u k={k}"),
            target: p,
            members: all
                .iter()
                .filter(|i| i.k == k && i.order() + 7 <= n)
                .map(|&i| vec![Source::Sup(v(p, 1.0, FieldId::U, i, SupKind::Value))])
                .collect(),
        });
    }
    let z = MultiIndex::ZERO;
    out.push(LineDef {
        id: "sup2-u".into(),
        target: 0.0,
        members: vec![vec![Source::Sup(v(0.0, 1.0, FieldId::U, z, SupKind::Value))]],
    });
    out.push(LineDef {
        id: "sup2-v".into(),
        target: 0.0,
        members: vec![vec![Source::Sup(v(0.5 - 7.0 * d, 1.5, FieldId::V, z, SupKind::ValuePlusPerp))]],
    });
    let pure_partial: Vec<MultiIndex> = low.iter().copied().filter(|i| i.k == 0).collect();
    out.push(LineDef {
        id: "sup3-v-perp".into(),
        target: 0.0,
        members: pure_partial.iter().map(|&i| vec![Source::Sup(v(1.5 - 4.0 * d, 1.5, FieldId::V, i, SupKind::Perp))]).collect(),
    });
    out.push(LineDef {
        id: "sup3-v".into(),
        target: 0.0,
        members: pure_partial.iter().map(|&i| vec![Source::Sup(v(0.5 - 4.0 * d, 1.5, FieldId::V, i, SupKind::Value))]).collect(),
    });
    for k in 0..=n.saturating_sub(4) {
        let kd = k as f64 * d;
        out.push(LineDef {
            id: format!("sup4-u k={k}"),
            target: kd,
            members: vec![vec![Source::Sup(v(0.0, 1.0, FieldId::U, MultiIndex::new(0, 0, k), SupKind::Value))]],
        });
        let members_k: Vec<MultiIndex> = low.iter().copied().filter(|i| i.k == k).collect();
        out.push(LineDef {
            id: format!("sup4-v k={k}"),
            target: kd,
            members: members_k
                .iter()
                .map(|&i| {
                    vec![
                        Source::Sup(v(1.5 - 7.0 * d, 1.5, FieldId::V, i, SupKind::Perp)),
                        Source::Sup(v(0.5 - 7.0 * d, 1.5, FieldId::V, i, SupKind::Value)),
                    ]
                })
                .collect(),
        });
        out.push(LineDef {
            id: format!("sup4-dv k={k}"),
            target: kd,
            members: members_k
                .iter()
                .flat_map(|&i| {
                    [MultiIndex { it: i.it + 1, ..i }, MultiIndex { ir: i.ir + 1, ..i }]
                        .map(|c| vec![Source::Sup(v(-0.5 - 7.0 * d, 1.5, FieldId::V, c, SupKind::Value))])
                })
                .collect(),
        });
    }
    out.retain(|l| !l.members.is_empty());
    out
}

/// Weighted sup-norms the chain lines need, for a [`super::RadialRecorder`].
pub fn chain_sup_specs(spec: &HierarchySpec) -> Vec<SupSpec> {
    let mut out: Vec<SupSpec> = Vec::new();
    for l in line_defs(spec) {
        for m in l.members {
            for src in m {
                if let Source::Sup(sp) = src {
                    if !out.contains(&sp) {
                        out.push(sp);
                    }
                }
            }
        }
    }
    out
}

fn series(tables: &DiagnosticTables, src: Source) -> Vec<(f64, f64)> {
    match src {
        Source::Energy(f, i, shift) => tables.energy_series(f, i).into_iter().map(|(s, e)| (s, e * s.powf(shift))).collect(),
        Source::Sup(sp) => tables.sup_series(&sp),
    }
}

/// Fits every hierarchy and sup-norm chain line. A line passes when its
/// largest member exponent is at most `target + tolerance`.
pub fn hierarchy_check(tables: &DiagnosticTables, spec: &HierarchySpec) -> Result<HierarchyReport, AnalysisError> {
    spec.validate()?;
    let mut lines = Vec::new();
    for def in line_defs(spec) {
        let mut fitted: Option<(f64, f64)> = None;
        let mut c1: Option<f64> = None;
        let mut notes = Vec::new();
        let mut any_data = false;
        for member in &def.members {
            let parts: Vec<Vec<(f64, f64)>> = member.iter().map(|&s| series(tables, s)).collect();
            if parts.iter().any(|p| p.is_empty()) {
                return Err(AnalysisError::Coverage(format!("line {} has a member without records", def.id)));
            }
            let summed: Vec<(f64, f64)> = (0..parts[0].len())
                .map(|j| (parts[0][j].0, parts.iter().map(|p| p[j].1).sum::<f64>()))
                .collect();
            if summed.iter().all(|(_, v)| *v == 0.0) {
                continue;
            }
            any_data = true;
            if spec.epsilon > 0.0 {
                let need = summed.iter().map(|(s, v)| v / (spec.epsilon * s.powf(def.target))).fold(0.0, f64::max);
                c1 = Some(c1.map_or(need, |c: f64| c.max(need)));
            }
            match fit_power_law(&summed) {
                Ok(f) => {
                    if fitted.is_none_or(|(e, _)| f.exponent > e) {
                        fitted = Some((f.exponent, f.width));
                    }
                }
                Err(e) => notes.push(e.to_string()),
            }
        }
        let pass = if !any_data {
            true
        } else {
            notes.is_empty() && fitted.is_some_and(|(e, _)| e <= def.target + spec.tolerance)
        };
        lines.push(HierarchyLine {
            id: def.id,
            target: def.target,
            fitted: fitted.map(|f| f.0),
            width: fitted.map(|f| f.1),
            pass,
            c1_needed: c1,
            members: def.members.len(),
            note: if any_data { notes.join("; ") } else { "all members vanish".into() },
        });
    }
    Ok(HierarchyReport { lines })
}
