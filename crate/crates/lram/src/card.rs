//! Material cards: one phase per line, `name rho K G mu` in SI units
//! (kg/m³, Pa, Pa, Pa·s). Blank lines and `#` comments are skipped.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use lram_core::materials::MaterialPhase;

use crate::error::Diagnostic;

pub fn parse_card(text: &str, path: &Path) -> Result<Vec<MaterialPhase>, Vec<Diagnostic>> {
    let mut phases: Vec<MaterialPhase> = Vec::new();
    let mut diags = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = Some(i + 1);
        let s = raw.split('#').next().unwrap_or("").trim();
        if s.is_empty() {
            continue;
        }
        let fields: Vec<&str> = s.split_whitespace().collect();
        if fields.len() != 5 {
            diags.push(Diagnostic::error(format!("expected 'name rho K G mu', found {} fields", fields.len())).at(path, line));
            continue;
        }
        let nums: Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        let Ok(v) = nums else {
            diags.push(Diagnostic::error(format!("non-numeric property in '{s}'")).at(path, line));
            continue;
        };
        if phases.iter().any(|p| p.name.eq_ignore_ascii_case(fields[0])) {
            diags.push(Diagnostic::error(format!("phase '{}' defined twice", fields[0])).at(path, line));
            continue;
        }
        match MaterialPhase::new(fields[0], v[0], v[1], v[2], v[3]) {
            Ok(p) => phases.push(p),
            Err(e) => diags.push(Diagnostic::error(e.to_string()).at(path, line)),
        }
    }
    if phases.is_empty() && diags.is_empty() {
        diags.push(Diagnostic::error("material card defines no phase").at(path, None));
    }
    if diags.is_empty() {
        Ok(phases)
    } else {
        Err(diags)
    }
}

pub fn load_card(path: &Path) -> Result<Vec<MaterialPhase>, Vec<Diagnostic>> {
    let text = fs::read_to_string(path)
        .map_err(|e| vec![Diagnostic::error(format!("cannot read material card: {e}")).at(path, None)])?;
    parse_card(&text, path)
}

pub fn write_card(phases: &[MaterialPhase]) -> String {
    let mut s = String::from("# name rho_kg_m3 K_Pa G_Pa mu_Pa_s\n");
    for p in phases {
        let _ = writeln!(s, "{} {:e} {:e} {:e} {:e}", p.name, p.rho, p.bulk, p.shear, p.mu_visc);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use lram_core::materials::builtin_phases;

    #[test]
    fn builtin_round_trip() {
        let phases = builtin_phases();
        let back = parse_card(&write_card(&phases), Path::new("c")).unwrap();
        assert_eq!(back, phases);
    }

    #[test]
    fn bad_lines_reported() {
        let d = parse_card("steel 7780 1.72e11 7.96e10 0\n\nfoo 1 2 3\nbar 1 -2 3 0\n", Path::new("c.txt")).unwrap_err();
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].line, Some(3));
        assert_eq!(d[1].line, Some(4));
    }
}
