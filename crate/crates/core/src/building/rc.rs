//! RC thermal network assembly.
//!
//! Each zone contributes an air node and an internal-mass node; each wall a
//! chain of layer nodes coupled by half-resistances, terminated at the
//! exterior air, the ground, or an adjacent zone's air node. Disturbances
//! enter through a fixed seven-channel vector: internal heat gains, ambient
//! and ground temperatures, and per-facade solar irradiance.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::ConfigError;

/// Disturbance channel order used by every building model.
pub const DISTURBANCE_LABELS: [&str; 7] =
    ["q_ihg", "t_amb", "t_gnd", "s_e", "s_w", "s_n", "s_s"];
pub const N_DISTURBANCES: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Facade {
    East,
    West,
    North,
    South,
}

impl Facade {
    /// Column of the facade's irradiance in the disturbance vector.
    pub fn channel(self) -> usize {
        match self {
            Facade::East => 3,
            Facade::West => 4,
            Facade::North => 5,
            Facade::South => 6,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WallBoundary {
    Exterior,
    Ground,
    /// Shared partition: the outermost layer couples to the named zone's air
    /// node. Declared by exactly one of the two zones.
    Zone(String),
}

/// One wall layer, inner to outer: lumped capacitance and the layer's total
/// thermal resistance (split half to each neighbouring node).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct WallLayer {
    pub capacitance_j_per_k: f64,
    pub resistance_k_per_w: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct WallSpec {
    pub boundary: WallBoundary,
    /// Facade orientation for solar pickup; interior/ground walls omit it.
    #[serde(default)]
    pub orientation: Option<Facade>,
    #[serde(default)]
    pub area_m2: f64,
    /// Fraction of facade irradiance (times area) absorbed at the outermost
    /// layer.
    #[serde(default)]
    pub ext_solar_share: f64,
    /// Fraction transmitted through glazing onto the innermost layer.
    #[serde(default)]
    pub int_solar_share: f64,
    /// Layers inner to outer, at least one.
    pub layers: Vec<WallLayer>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ZoneSpec {
    pub id: String,
    pub volume_m3: f64,
    pub air_capacitance_j_per_k: f64,
    pub internal_mass_capacitance_j_per_k: f64,
    /// Convective coupling between zone air and internal mass.
    pub internal_mass_resistance_k_per_w: f64,
    /// Share of building internal gains delivered to this zone; defaults to
    /// the volume share.
    #[serde(default)]
    pub gain_fraction: Option<f64>,
    #[serde(default, rename = "wall")]
    pub walls: Vec<WallSpec>,
}

/// Linear thermal model `dx/dt = A x + B_v v (+ B_u u)`, `y = C x`.
#[derive(Clone, Debug)]
pub struct StateSpaceModel {
    pub a: DMatrix<f64>,
    pub b_v: DMatrix<f64>,
    /// HVAC heat-extraction map (one column per zone); dropped by
    /// [`strip_hvac_inputs`].
    pub b_u: Option<DMatrix<f64>>,
    pub c: DMatrix<f64>,
    pub state_labels: Vec<String>,
    pub n_zones: usize,
    pub zone_volumes: Vec<f64>,
}

impl StateSpaceModel {
    pub fn dim(&self) -> usize {
        self.a.nrows()
    }
}

/// Assemble the full RC model from zone specifications. State ordering:
/// zone air temperatures, then internal masses, then wall layers in
/// declaration order.
pub fn assemble_rc(zones: &[ZoneSpec], gain_split_air: f64) -> Result<StateSpaceModel, ConfigError> {
    if zones.is_empty() {
        return Err(ConfigError::Invalid("building needs at least one zone".into()));
    }
    if !(0.0..=1.0).contains(&gain_split_air) {
        return Err(ConfigError::Invalid("gain split must be within [0, 1]".into()));
    }
    let nz = zones.len();
    let mut zone_idx = std::collections::BTreeMap::new();
    for (i, z) in zones.iter().enumerate() {
        if zone_idx.insert(z.id.clone(), i).is_some() {
            return Err(ConfigError::Invalid(format!("duplicate zone id `{}`", z.id)));
        }
        if !(z.volume_m3 > 0.0) {
            return Err(ConfigError::Invalid(format!("zone `{}` needs volume > 0", z.id)));
        }
        for (name, v) in [
            ("air capacitance", z.air_capacitance_j_per_k),
            ("internal mass capacitance", z.internal_mass_capacitance_j_per_k),
            ("internal mass resistance", z.internal_mass_resistance_k_per_w),
        ] {
            if !(v > 0.0) {
                return Err(ConfigError::Invalid(format!("zone `{}` needs {name} > 0", z.id)));
            }
        }
        for (wi, w) in z.walls.iter().enumerate() {
            if w.layers.is_empty() {
                return Err(ConfigError::Invalid(format!(
                    "zone `{}` wall {wi} needs at least one layer",
                    z.id
                )));
            }
            for l in &w.layers {
                if !(l.capacitance_j_per_k > 0.0) || !(l.resistance_k_per_w > 0.0) {
                    return Err(ConfigError::Invalid(format!(
                        "zone `{}` wall {wi}: layer capacitances and resistances must be > 0",
                        z.id
                    )));
                }
            }
            if let WallBoundary::Zone(other) = &w.boundary {
                if other == &z.id {
                    return Err(ConfigError::Invalid(format!(
                        "zone `{}` wall {wi} adjoins itself",
                        z.id
                    )));
                }
                if !zones.iter().any(|zz| &zz.id == other) {
                    return Err(ConfigError::DanglingReference {
                        reference: other.clone(),
                        context: format!("zone `{}` wall {wi} adjacency", z.id),
                    });
                }
            }
        }
    }

    // Count states and label them.
    let mut state_labels: Vec<String> = zones.iter().map(|z| format!("t_air[{}]", z.id)).collect();
    state_labels.extend(zones.iter().map(|z| format!("t_im[{}]", z.id)));
    let mut wall_base = Vec::new(); // first state index of each (zone, wall)
    let mut n = 2 * nz;
    for (zi, z) in zones.iter().enumerate() {
        for (wi, w) in z.walls.iter().enumerate() {
            wall_base.push(((zi, wi), n));
            for li in 0..w.layers.len() {
                state_labels.push(format!("t_w[{}][{wi}][{li}]", z.id));
            }
            n += w.layers.len();
        }
    }

    let v_tot: f64 = zones.iter().map(|z| z.volume_m3).sum();
    let mut a = DMatrix::zeros(n, n);
    let mut b_v = DMatrix::zeros(n, N_DISTURBANCES);
    let mut b_u = DMatrix::zeros(n, nz);
    let mut capacitance = vec![0.0; n];
    // Conductance graph for the connectivity check; node n is "environment".
    let mut adjacency: Vec<Vec<usize>> = vec![Vec::new(); n + 1];

    let couple = |a: &mut DMatrix<f64>, adj: &mut Vec<Vec<usize>>, i: usize, j: usize, g: f64, cap: &[f64]| {
        a[(i, i)] -= g / cap[i];
        a[(i, j)] += g / cap[i];
        a[(j, j)] -= g / cap[j];
        a[(j, i)] += g / cap[j];
        adj[i].push(j);
        adj[j].push(i);
    };

    for (zi, z) in zones.iter().enumerate() {
        capacitance[zi] = z.air_capacitance_j_per_k;
        capacitance[nz + zi] = z.internal_mass_capacitance_j_per_k;
    }
    for &((zi, wi), base) in &wall_base {
        for (li, l) in zones[zi].walls[wi].layers.iter().enumerate() {
            capacitance[base + li] = l.capacitance_j_per_k;
        }
    }

    let env = n;
    for (zi, z) in zones.iter().enumerate() {
        let air = zi;
        let im = nz + zi;
        couple(&mut a, &mut adjacency, air, im, 1.0 / z.internal_mass_resistance_k_per_w, &capacitance);

        // Internal heat gains split between air and internal mass.
        let share = z.gain_fraction.unwrap_or(z.volume_m3 / v_tot);
        b_v[(air, 0)] += gain_split_air * share / capacitance[air];
        b_v[(im, 0)] += (1.0 - gain_split_air) * share / capacitance[im];

        // HVAC heat extraction from the zone air node.
        b_u[(air, zi)] = -1.0 / capacitance[air];

        for (wi, w) in z.walls.iter().enumerate() {
            let base = wall_base
                .iter()
                .find(|&&((a, b), _)| a == zi && b == wi)
                .map(|&(_, b)| b)
                .expect("indexed above");
            let nl = w.layers.len();
            // Air to innermost node through half of layer 0.
            couple(&mut a, &mut adjacency, air, base, 2.0 / w.layers[0].resistance_k_per_w, &capacitance);
            for li in 0..nl - 1 {
                let g = 2.0 / (w.layers[li].resistance_k_per_w + w.layers[li + 1].resistance_k_per_w);
                couple(&mut a, &mut adjacency, base + li, base + li + 1, g, &capacitance);
            }
            let outer = base + nl - 1;
            let g_out = 2.0 / w.layers[nl - 1].resistance_k_per_w;
            match &w.boundary {
                WallBoundary::Exterior => {
                    a[(outer, outer)] -= g_out / capacitance[outer];
                    b_v[(outer, 1)] += g_out / capacitance[outer];
                    adjacency[outer].push(env);
                    adjacency[env].push(outer);
                }
                WallBoundary::Ground => {
                    a[(outer, outer)] -= g_out / capacitance[outer];
                    b_v[(outer, 2)] += g_out / capacitance[outer];
                    adjacency[outer].push(env);
                    adjacency[env].push(outer);
                }
                WallBoundary::Zone(other) => {
                    let oz = zone_idx[other];
                    couple(&mut a, &mut adjacency, outer, oz, g_out, &capacitance);
                }
            }
            if let Some(f) = w.orientation {
                let col = f.channel();
                b_v[(outer, col)] += w.area_m2 * w.ext_solar_share / capacitance[outer];
                b_v[(base, col)] += w.area_m2 * w.int_solar_share / capacitance[base];
            }
        }
    }

    // Every node must reach a boundary temperature, otherwise the model has
    // a floating island and A is singular.
    let mut seen = vec![false; n + 1];
    let mut stack = vec![env];
    seen[env] = true;
    while let Some(i) = stack.pop() {
        for &j in &adjacency[i] {
            if !seen[j] {
                seen[j] = true;
                stack.push(j);
            }
        }
    }
    if let Some(i) = (0..n).find(|&i| !seen[i]) {
        return Err(ConfigError::Invalid(format!(
            "state `{}` has no resistive path to any boundary temperature",
            state_labels[i]
        )));
    }

    // Full-model output: the zone air temperatures.
    let mut c = DMatrix::zeros(nz, n);
    for zi in 0..nz {
        c[(zi, zi)] = 1.0;
    }

    Ok(StateSpaceModel {
        a,
        b_v,
        b_u: Some(b_u),
        c,
        state_labels,
        n_zones: nz,
        zone_volumes: zones.iter().map(|z| z.volume_m3).collect(),
    })
}

/// Drop the HVAC inputs and emit the volume-weighted return temperature as
/// the single output.
pub fn strip_hvac_inputs(model: &StateSpaceModel) -> StateSpaceModel {
    let n = model.dim();
    let v_tot: f64 = model.zone_volumes.iter().sum();
    let mut c = DMatrix::zeros(1, n);
    for (zi, &v) in model.zone_volumes.iter().enumerate() {
        c[(0, zi)] = v / v_tot;
    }
    StateSpaceModel {
        a: model.a.clone(),
        b_v: model.b_v.clone(),
        b_u: None,
        c,
        state_labels: model.state_labels.clone(),
        n_zones: model.n_zones,
        zone_volumes: model.zone_volumes.clone(),
    }
}

/// Deterministic multi-zone office used by tests and demo scenarios. Ten
/// zones produce a model with well over one hundred states.
pub fn synthetic_office(n_zones: usize) -> Vec<ZoneSpec> {
    let facades = [Facade::East, Facade::West, Facade::North, Facade::South];
    (0..n_zones)
        .map(|i| {
            let scale = 1.0 + 0.13 * (i % 5) as f64;
            let mut walls: Vec<WallSpec> = facades
                .iter()
                .enumerate()
                .map(|(k, &f)| WallSpec {
                    boundary: WallBoundary::Exterior,
                    orientation: Some(f),
                    area_m2: 36.0 * scale,
                    ext_solar_share: 0.55,
                    int_solar_share: 0.12,
                    layers: vec![
                        WallLayer {
                            capacitance_j_per_k: 9.0e5 * scale,
                            resistance_k_per_w: 2.4e-3 * (1.0 + 0.1 * k as f64),
                        },
                        WallLayer { capacitance_j_per_k: 2.4e6 * scale, resistance_k_per_w: 9.5e-3 },
                        WallLayer { capacitance_j_per_k: 1.1e6 * scale, resistance_k_per_w: 2.1e-2 },
                    ],
                })
                .collect();
            walls.push(WallSpec {
                boundary: WallBoundary::Ground,
                orientation: None,
                area_m2: 0.0,
                ext_solar_share: 0.0,
                int_solar_share: 0.0,
                layers: vec![
                    WallLayer { capacitance_j_per_k: 6.5e6 * scale, resistance_k_per_w: 1.4e-2 },
                    WallLayer { capacitance_j_per_k: 9.0e6 * scale, resistance_k_per_w: 3.0e-2 },
                ],
            });
            if i + 1 < n_zones {
                walls.push(WallSpec {
                    boundary: WallBoundary::Zone(format!("z{}", i + 1)),
                    orientation: None,
                    area_m2: 0.0,
                    ext_solar_share: 0.0,
                    int_solar_share: 0.0,
                    layers: vec![WallLayer {
                        capacitance_j_per_k: 1.6e6 * scale,
                        resistance_k_per_w: 6.0e-3,
                    }],
                });
            }
            ZoneSpec {
                id: format!("z{i}"),
                volume_m3: 900.0 * scale,
                air_capacitance_j_per_k: 900.0 * scale * 1.2 * 1005.0,
                internal_mass_capacitance_j_per_k: 2.6e7 * scale,
                internal_mass_resistance_k_per_w: 1.9e-3,
                gain_fraction: None,
                walls,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DVector;

    fn single_zone() -> Vec<ZoneSpec> {
        vec![ZoneSpec {
            id: "z".into(),
            volume_m3: 100.0,
            air_capacitance_j_per_k: 1.2e5,
            internal_mass_capacitance_j_per_k: 5.0e6,
            internal_mass_resistance_k_per_w: 2.0e-3,
            gain_fraction: None,
            walls: vec![WallSpec {
                boundary: WallBoundary::Exterior,
                orientation: None,
                area_m2: 0.0,
                ext_solar_share: 0.0,
                int_solar_share: 0.0,
                layers: vec![WallLayer { capacitance_j_per_k: 2.0e6, resistance_k_per_w: 1.0e-2 }],
            }],
        }]
    }

    /// Hand-assembled 3x3 oracle for one zone, one single-layer wall.
    #[test]
    fn single_zone_matches_hand_assembly() {
        let m = assemble_rc(&single_zone(), 0.5).unwrap();
        assert_eq!(m.dim(), 3);
        let (ca, cim, cw) = (1.2e5, 5.0e6, 2.0e6);
        let g_im = 1.0 / 2.0e-3;
        let g_half = 2.0 / 1.0e-2;
        // States: [air, im, wall]; wall couples air via R/2 and ambient via R/2.
        let expected = DMatrix::from_row_slice(
            3,
            3,
            &[
                -(g_im + g_half) / ca, g_im / ca, g_half / ca,
                g_im / cim, -g_im / cim, 0.0,
                g_half / cw, 0.0, -(g_half + g_half) / cw,
            ],
        );
        assert!((m.a.clone() - expected).norm() < 1e-12);
        // Interior rows sum to zero; the wall row leaks g_half/C to ambient.
        let ones = DVector::from_element(3, 1.0);
        let rowsum = &m.a * ones;
        assert!(rowsum[0].abs() < 1e-15);
        assert!(rowsum[1].abs() < 1e-15);
        assert!((rowsum[2] + g_half / cw).abs() < 1e-12);
        assert!((m.b_v[(2, 1)] - g_half / cw).abs() < 1e-15);
    }

    /// All temperatures equal to the boundary temperatures and zero gains
    /// leave the state unchanged.
    #[test]
    fn thermal_equilibrium_is_stationary() {
        let zones = synthetic_office(3);
        let m = assemble_rc(&zones, 0.5).unwrap();
        let t = 295.0;
        let x = DVector::from_element(m.dim(), t);
        let mut v = DVector::zeros(N_DISTURBANCES);
        v[1] = t; // ambient
        v[2] = t; // ground
        let xdot = &m.a * x + &m.b_v * v;
        assert!(xdot.amax() < 1e-9, "max residual {}", xdot.amax());
    }

    #[test]
    fn assembled_model_is_stable() {
        let m = assemble_rc(&synthetic_office(4), 0.5).unwrap();
        assert!(super::super::reduce::is_hurwitz(&m.a));
    }

    #[test]
    fn ten_zone_office_exceeds_hundred_states() {
        let m = assemble_rc(&synthetic_office(10), 0.5).unwrap();
        assert!(m.dim() >= 100, "got {}", m.dim());
    }

    #[test]
    fn output_weights_sum_to_one() {
        let m = strip_hvac_inputs(&assemble_rc(&synthetic_office(4), 0.5).unwrap());
        assert!(m.b_u.is_none());
        let sum: f64 = (0..m.n_zones).map(|z| m.c[(0, z)]).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        for j in m.n_zones..m.dim() {
            assert_eq!(m.c[(0, j)], 0.0);
        }
    }

    /// Two zones, 2:1 volumes at 300 K and 303 K: T_RET = 301 K.
    #[test]
    fn volume_weighted_output() {
        let mut zones = synthetic_office(2);
        zones[0].volume_m3 = 2000.0;
        zones[1].volume_m3 = 1000.0;
        let m = strip_hvac_inputs(&assemble_rc(&zones, 0.5).unwrap());
        let mut x = DVector::zeros(m.dim());
        x[0] = 300.0;
        x[1] = 303.0;
        let y = (&m.c * x)[(0, 0)];
        assert!((y - 301.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut zero_vol = single_zone();
        zero_vol[0].volume_m3 = 0.0;
        assert!(assemble_rc(&zero_vol, 0.5).is_err());

        let mut dangling = single_zone();
        dangling[0].walls[0].boundary = WallBoundary::Zone("nope".into());
        assert!(assemble_rc(&dangling, 0.5).is_err());

        let mut no_layers = single_zone();
        no_layers[0].walls[0].layers.clear();
        assert!(assemble_rc(&no_layers, 0.5).is_err());
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(32))]
        /// Any valid zone set assembles to a stable model that rests at
        /// thermal equilibrium.
        #[test]
        fn random_buildings_are_stable(
            n_zones in 1usize..4,
            c_air in 1e5_f64..5e6,
            c_im in 1e6_f64..1e8,
            r_im in 1e-4_f64..1e-2,
            r_layer in 1e-3_f64..1e-1,
            c_layer in 1e5_f64..1e7,
            layers in 1usize..4,
            split in 0.0_f64..1.0,
        ) {
            let zones: Vec<ZoneSpec> = (0..n_zones)
                .map(|i| ZoneSpec {
                    id: format!("z{i}"),
                    volume_m3: 500.0 + 100.0 * i as f64,
                    air_capacitance_j_per_k: c_air * (1.0 + 0.07 * i as f64),
                    internal_mass_capacitance_j_per_k: c_im,
                    internal_mass_resistance_k_per_w: r_im,
                    gain_fraction: None,
                    walls: vec![
                        WallSpec {
                            boundary: WallBoundary::Exterior,
                            orientation: Some(Facade::South),
                            area_m2: 100.0,
                            ext_solar_share: 0.3,
                            int_solar_share: 0.05,
                            // Slightly graded layers so spectra are simple.
                            layers: (0..layers)
                                .map(|k| WallLayer {
                                    capacitance_j_per_k: c_layer * (1.0 + 0.13 * k as f64),
                                    resistance_k_per_w: r_layer * (1.0 + 0.11 * k as f64),
                                })
                                .collect(),
                        },
                        WallSpec {
                            boundary: if i == 0 {
                                WallBoundary::Ground
                            } else {
                                WallBoundary::Zone(format!("z{}", i - 1))
                            },
                            orientation: None,
                            area_m2: 0.0,
                            ext_solar_share: 0.0,
                            int_solar_share: 0.0,
                            layers: vec![WallLayer {
                                capacitance_j_per_k: c_layer,
                                resistance_k_per_w: r_layer,
                            }],
                        },
                    ],
                })
                .collect();
            let m = assemble_rc(&zones, split).unwrap();
            proptest::prop_assert!(super::super::reduce::is_hurwitz(&m.a));
            let t = 290.0;
            let x = DVector::from_element(m.dim(), t);
            let mut v = DVector::zeros(N_DISTURBANCES);
            v[1] = t;
            v[2] = t;
            let xdot = &m.a * x + &m.b_v * v;
            proptest::prop_assert!(xdot.amax() < 1e-7 * (1.0 + m.a.norm()));
        }
    }
}
