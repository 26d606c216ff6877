//! Point-charge molecules: PQR parsing, bundled fixtures and seeded
//! synthetic clusters.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Atom {
    /// Position in Å.
    pub position: [f64; 3],
    /// Partial charge in elementary charges.
    pub charge: f64,
    /// Radius in Å.
    pub radius: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Molecule {
    name: String,
    atoms: Vec<Atom>,
}

impl Molecule {
    pub fn new(name: impl Into<String>, atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::NoAtoms);
        }
        for (i, a) in atoms.iter().enumerate() {
            if !a.position.iter().all(|v| v.is_finite()) || !a.charge.is_finite() {
                return Err(Error::InvalidArgument(format!("atom {i} has a non-finite field")));
            }
            if !(a.radius >= 0.0) {
                return Err(Error::InvalidArgument(format!("atom {i} has negative radius {}", a.radius)));
            }
        }
        Ok(Self { name: name.into(), atoms })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    pub fn len(&self) -> usize {
        self.atoms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.is_empty()
    }

    pub fn net_charge(&self) -> f64 {
        self.atoms.iter().map(|a| a.charge).sum()
    }

    /// Largest `|coordinate|` over all atoms and axes.
    pub fn max_abs_coord(&self) -> f64 {
        self.atoms.iter().flat_map(|a| a.position).fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Same geometry with every charge multiplied by `s`.
    pub fn with_scaled_charges(&self, s: f64) -> Self {
        let atoms = self.atoms.iter().map(|a| Atom { charge: a.charge * s, ..*a }).collect();
        Self { name: self.name.clone(), atoms }
    }

    /// Same geometry with the charge of atom `i` replaced.
    pub fn with_charge(&self, i: usize, q: f64) -> Self {
        let mut atoms = self.atoms.clone();
        atoms[i].charge = q;
        Self { name: self.name.clone(), atoms }
    }

    /// First `k` atoms.
    pub fn subset(&self, k: usize) -> Result<Self> {
        Self::new(format!("{}[..{k}]", self.name), self.atoms[..k.min(self.atoms.len())].to_vec())
    }
}

/// Parses PQR text. Only `ATOM` and `HETATM` records are read; the last
/// five whitespace-separated fields are `x y z charge radius`.
pub fn parse_pqr_str(name: &str, text: &str) -> Result<Molecule> {
    let mut atoms = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let fields: Vec<&str> = line.split_whitespace().collect();
        match fields.first() {
            Some(&"ATOM") | Some(&"HETATM") => {}
            _ => continue,
        }
        let line = lineno + 1;
        if fields.len() < 6 {
            return Err(Error::Parse { line, msg: format!("expected at least 6 fields, found {}", fields.len()) });
        }
        let tail = &fields[fields.len() - 5..];
        let mut vals = [0.0f64; 5];
        for (v, f) in vals.iter_mut().zip(tail) {
            *v = f.parse().map_err(|_| Error::Parse { line, msg: format!("malformed number {f:?}") })?;
            if !v.is_finite() {
                return Err(Error::Parse { line, msg: format!("non-finite number {f:?}") });
            }
        }
        if vals[4] < 0.0 {
            return Err(Error::Parse { line, msg: format!("negative radius {}", vals[4]) });
        }
        atoms.push(Atom { position: [vals[0], vals[1], vals[2]], charge: vals[3], radius: vals[4] });
    }
    Molecule::new(name, atoms)
}

pub fn parse_pqr(path: impl AsRef<Path>) -> Result<Molecule> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    parse_pqr_str(&name, &text)
}

pub const BORN_ION_PQR: &str = include_str!("../fixtures/born_ion.pqr");
pub const ACETAZOLAMIDE18_PQR: &str = include_str!("../fixtures/acetazolamide18.pqr");

/// Unit charge of unit radius at the origin.
pub fn born_ion() -> Molecule {
    parse_pqr_str("born_ion", BORN_ION_PQR).expect("bundled fixture parses")
}

/// 18-atom acetazolamide-like geometry with realistic partial charges.
pub fn acetazolamide18() -> Molecule {
    parse_pqr_str("acetazolamide18", ACETAZOLAMIDE18_PQR).expect("bundled fixture parses")
}

/// Seeded random cluster inside the cube `[-half_extent, half_extent]^3`
/// with pairwise separation at least `min_sep` Å and charges uniform in
/// `[-0.6, 0.6]`.
pub fn synthetic_cluster(n_atoms: usize, half_extent: f64, min_sep: f64, seed: u64) -> Result<Molecule> {
    if n_atoms == 0 {
        return Err(Error::NoAtoms);
    }
    if !(half_extent > 0.0) || !(min_sep >= 0.0) {
        return Err(Error::InvalidArgument("cluster extent must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cell = min_sep.max(1e-9);
    let mut cells: HashMap<[i64; 3], Vec<usize>> = HashMap::new();
    let mut atoms: Vec<Atom> = Vec::with_capacity(n_atoms);
    let key = |p: &[f64; 3]| p.map(|v| (v / cell).floor() as i64);
    let mut attempts = 0usize;
    while atoms.len() < n_atoms {
        attempts += 1;
        if attempts > 1000 * n_atoms + 10_000 {
            return Err(Error::InvalidArgument(format!(
                "could not place {n_atoms} atoms {min_sep} Å apart in a {} Å cube",
                2.0 * half_extent
            )));
        }
        let p = [0, 1, 2].map(|_| rng.gen_range(-half_extent..=half_extent));
        let k = key(&p);
        let mut clash = false;
        'scan: for dx in -1..=1 {
            for dy in -1..=1 {
                for dz in -1..=1 {
                    if let Some(list) = cells.get(&[k[0] + dx, k[1] + dy, k[2] + dz]) {
                        for &j in list {
                            let q = atoms[j].position;
                            let d2: f64 = (0..3).map(|a| (p[a] - q[a]).powi(2)).sum();
                            if d2 < min_sep * min_sep {
                                clash = true;
                                break 'scan;
                            }
                        }
                    }
                }
            }
        }
        if clash {
            continue;
        }
        let charge = rng.gen_range(-0.6..=0.6);
        cells.entry(k).or_default().push(atoms.len());
        atoms.push(Atom { position: p, charge, radius: 1.5 });
    }
    Molecule::new(format!("cluster{n_atoms}_s{seed}"), atoms)
}

/// Seed recorded for the 782-particle rank-reduction system.
pub const CLUSTER782_SEED: u64 = 782;
/// Seed recorded for the 1228-atom protein-scale stand-in.
pub const CLUSTER1228_SEED: u64 = 1228;

/// 782 particles in a 40 Å cube, 1 Å minimum separation.
pub fn cluster782() -> Molecule {
    synthetic_cluster(782, 20.0, 1.0, CLUSTER782_SEED).expect("cluster fits")
}

/// 1228 atoms in a 44 Å cube, 1 Å minimum separation.
pub fn cluster1228() -> Molecule {
    synthetic_cluster(1228, 22.0, 1.0, CLUSTER1228_SEED).expect("cluster fits")
}

/// Fixed-density cloud: the cube edge grows as `N^{1/3}` so that every
/// size has the density of the 782-particle system.
pub fn fixed_density_cloud(n_atoms: usize, seed: u64) -> Result<Molecule> {
    let half = 20.0 * (n_atoms as f64 / 782.0).cbrt();
    synthetic_cluster(n_atoms, half, 1.0, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures() {
        let b = born_ion();
        assert_eq!(b.len(), 1);
        assert_eq!(b.net_charge(), 1.0);
        assert_eq!(b.atoms()[0].radius, 1.0);
        assert_eq!(acetazolamide18().len(), 18);
    }

    #[test]
    fn parse_errors_carry_line_numbers() {
        let e = parse_pqr_str("x", "REMARK\nATOM 1 C X 1 0.0 abc 0.0 0.1 1.0\n").unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }), "{e}");
        assert!(matches!(parse_pqr_str("x", ""), Err(Error::NoAtoms)));
        assert!(matches!(parse_pqr_str("x", "HETATM 1 2\n"), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn ignores_other_records_and_reads_hetatm() {
        let m = parse_pqr_str("x", "HEADER foo\nHETATM 1 NA NA 1 1 2 3 1 0.9\nTER\nATOMIC 1 2 3 4 5\n").unwrap();
        assert_eq!(m.len(), 1);
        assert_eq!(m.atoms()[0].position, [1.0, 2.0, 3.0]);
    }

    #[test]
    fn clusters_are_seeded_and_separated() {
        let a = synthetic_cluster(60, 5.0, 1.0, 9).unwrap();
        let b = synthetic_cluster(60, 5.0, 1.0, 9).unwrap();
        assert_eq!(a, b);
        for (i, x) in a.atoms().iter().enumerate() {
            assert!(x.position.iter().all(|v| v.abs() <= 5.0));
            assert!(x.charge.abs() <= 0.6);
            for y in &a.atoms()[..i] {
                let d2: f64 = (0..3).map(|k| (x.position[k] - y.position[k]).powi(2)).sum();
                assert!(d2 >= 1.0);
            }
        }
        assert!(synthetic_cluster(1000, 1.0, 1.0, 0).is_err());
    }
}
