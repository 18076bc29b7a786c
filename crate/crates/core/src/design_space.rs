//! The parametric design space: a side-lit office room, its opening and one of
//! five external shading families (or none).
//!
//! Every family is a Cartesian product of discrete axes. Alternatives are
//! enumerated in lexicographic (mixed-radix) order over those axes, so an id
//! is simply the rank of its grid point and datasets stay diffable across
//! runs. The axis order is
//!
//! `room size, win_side, obs_angle, opening layout, glass_vt, shading axes…, sh_mat`
//!
//! Geometric feasibility is a separate predicate ([`is_valid`]) so the
//! unfiltered counts stay auditable.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ROOM_HEIGHT: f64 = 3.5;
pub const ROOM_SIZES: [(f64, f64); 3] = [(3.0, 4.0), (6.0, 7.0), (8.0, 10.0)];
pub const OBS_ANGLES: [f64; 3] = [0.0, 30.0, 60.0];
pub const GLASS_VT: [f64; 2] = [60.0, 80.0];
pub const REFL_FLOOR: f64 = 0.20;
pub const REFL_CEILING: f64 = 0.70;
pub const REFL_WALLS: f64 = 0.50;

/// Total window width may not exceed this fraction of the wall width.
pub const MAX_GLAZED_WIDTH_FRACTION: f64 = 0.95;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    NoShading,
    Overhang,
    Louvers,
    Fins,
    Eggcrate,
    VerticalPanel,
}

impl Family {
    pub const ALL: [Family; 6] = [
        Family::NoShading,
        Family::Overhang,
        Family::Louvers,
        Family::Fins,
        Family::Eggcrate,
        Family::VerticalPanel,
    ];

    /// The five shading families, i.e. everything the optimizer works on.
    pub const SHADED: [Family; 5] = [
        Family::Overhang,
        Family::Louvers,
        Family::Fins,
        Family::Eggcrate,
        Family::VerticalPanel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::NoShading => "no_shading",
            Family::Overhang => "overhang",
            Family::Louvers => "louvers",
            Family::Fins => "fins",
            Family::Eggcrate => "eggcrate",
            Family::VerticalPanel => "vertical_panel",
        }
    }

    /// Numeric shading axes in their canonical order, excluding material.
    pub fn shading_axes(self) -> &'static [(&'static str, &'static [f64])] {
        match self {
            Family::NoShading => &[],
            Family::Overhang => &[
                ("sh_dis", &[0.0, 1.0]),
                ("sh_depth", &[0.6, 0.8, 1.0]),
                ("sh_tilt", &[0.0, 15.0, 30.0]),
            ],
            Family::Louvers => &[
                ("sh_dis", &[0.4, 0.6]),
                ("sh_depth", &[0.2, 0.4, 0.6]),
                ("sh_tilt", &[0.0, 15.0, 30.0]),
            ],
            Family::Fins => &[
                ("sh_dis", &[0.4, 0.8]),
                ("sh_depth", &[0.2, 0.4, 0.6]),
                ("sh_angle", &[-15.0, 0.0, 15.0]),
            ],
            Family::Eggcrate => &[
                ("sh_hdis", &[0.4, 0.8]),
                ("sh_depth", &[0.2, 0.4, 0.6]),
                ("sh_vdis", &[0.4, 0.8]),
            ],
            Family::VerticalPanel => &[
                ("sh_poh", &[0.3, 0.4, 0.5]),
                ("sh_dis", &[0.5, 1.0]),
                ("sh_rad", &[0.1, 0.2]),
            ],
        }
    }

    pub fn has_material(self) -> bool {
        self != Family::NoShading
    }

    /// Opening layouts this family may be paired with (indices into [`OPENING_LAYOUTS`]).
    pub fn layouts(self) -> &'static [usize] {
        match self {
            // perforated façade screens only come with fully glazed façades
            Family::VerticalPanel => &[8],
            _ => &[0, 1, 2, 3, 4, 5, 6, 7, 8],
        }
    }

    /// Cardinality of each enumeration axis, in enumeration order.
    pub fn axis_sizes(self) -> Vec<usize> {
        let mut sizes = vec![
            ROOM_SIZES.len(),
            Orientation::ALL.len(),
            OBS_ANGLES.len(),
            self.layouts().len(),
            GLASS_VT.len(),
        ];
        sizes.extend(self.shading_axes().iter().map(|(_, levels)| levels.len()));
        if self.has_material() {
            sizes.push(Material::ALL.len());
        }
        sizes
    }

    pub fn axis_names(self) -> Vec<&'static str> {
        let mut names = vec!["room_size", "win_side", "obs_angle", "opening", "glass_vt"];
        names.extend(self.shading_axes().iter().map(|(name, _)| *name));
        if self.has_material() {
            names.push("sh_mat");
        }
        names
    }

    /// Number of enumerated alternatives.
    pub fn count(self) -> usize {
        self.axis_sizes().iter().product()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::UnknownFamily(s.to_string()))
    }
}

/// Compass orientation of the glazed wall.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Orientation {
    N,
    E,
    W,
    S,
}

impl Orientation {
    pub const ALL: [Orientation; 4] = [Orientation::N, Orientation::E, Orientation::W, Orientation::S];

    /// Azimuth of the outward wall normal, degrees clockwise from north.
    pub fn azimuth_deg(self) -> f64 {
        match self {
            Orientation::N => 0.0,
            Orientation::E => 90.0,
            Orientation::S => 180.0,
            Orientation::W => 270.0,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Orientation::N => "N",
            Orientation::E => "E",
            Orientation::W => "W",
            Orientation::S => "S",
        }
    }

    pub fn index(self) -> usize {
        Orientation::ALL.iter().position(|o| *o == self).unwrap()
    }
}

impl fmt::Display for Orientation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Orientation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Orientation::ALL
            .into_iter()
            .find(|o| o.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::domain(format!("unknown orientation `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Material {
    Aluminium,
    Wood,
}

impl Material {
    pub const ALL: [Material; 2] = [Material::Aluminium, Material::Wood];

    pub fn label(self) -> &'static str {
        match self {
            Material::Aluminium => "aluminium",
            Material::Wood => "wood",
        }
    }

    pub fn index(self) -> usize {
        match self {
            Material::Aluminium => 0,
            Material::Wood => 1,
        }
    }
}

impl FromStr for Material {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Material::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::domain(format!("unknown shading material `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpeningCategory {
    Ordinary,
    HighlyGlazed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoomSpec {
    pub width_x: f64,
    pub length_y: f64,
    pub height: f64,
    pub win_side: Orientation,
    pub obs_angle: f64,
    pub refl_floor: f64,
    pub refl_ceiling: f64,
    pub refl_walls: f64,
}

impl RoomSpec {
    /// Room with the fixed height and interior reflectances.
    pub fn new(width_x: f64, length_y: f64, win_side: Orientation, obs_angle: f64) -> Self {
        RoomSpec {
            width_x,
            length_y,
            height: ROOM_HEIGHT,
            win_side,
            obs_angle,
            refl_floor: REFL_FLOOR,
            refl_ceiling: REFL_CEILING,
            refl_walls: REFL_WALLS,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OpeningSpec {
    pub category: OpeningCategory,
    pub wwr: f64,
    pub win_sill: f64,
    pub win_height: f64,
    pub win_num: u32,
    pub glass_vt: f64,
}

/// Window geometry without the glass, one entry per opening layout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpeningLayout {
    pub category: OpeningCategory,
    pub wwr: f64,
    pub win_sill: f64,
    pub win_height: f64,
    pub win_num: u32,
}

const fn ordinary(wwr: f64, win_height: f64, win_num: u32) -> OpeningLayout {
    OpeningLayout { category: OpeningCategory::Ordinary, wwr, win_sill: 1.0, win_height, win_num }
}

pub const OPENING_LAYOUTS: [OpeningLayout; 9] = [
    ordinary(30.0, 2.2, 1),
    ordinary(30.0, 2.2, 2),
    ordinary(30.0, 2.4, 1),
    ordinary(30.0, 2.4, 2),
    ordinary(60.0, 2.2, 1),
    ordinary(60.0, 2.2, 2),
    ordinary(60.0, 2.4, 1),
    ordinary(60.0, 2.4, 2),
    OpeningLayout {
        category: OpeningCategory::HighlyGlazed,
        wwr: 90.0,
        win_sill: 0.0,
        win_height: 3.4,
        win_num: 1,
    },
];

impl OpeningLayout {
    pub fn with_glass(self, glass_vt: f64) -> OpeningSpec {
        OpeningSpec {
            category: self.category,
            wwr: self.wwr,
            win_sill: self.win_sill,
            win_height: self.win_height,
            win_num: self.win_num,
            glass_vt,
        }
    }

    fn matches(&self, o: &OpeningSpec) -> bool {
        self.category == o.category
            && close(self.wwr, o.wwr)
            && close(self.win_sill, o.win_sill)
            && close(self.win_height, o.win_height)
            && self.win_num == o.win_num
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ShadingSpec {
    NoShading,
    Overhang { sh_dis: f64, sh_depth: f64, sh_tilt: f64, sh_mat: Material },
    Louvers { sh_dis: f64, sh_depth: f64, sh_tilt: f64, sh_mat: Material },
    Fins { sh_dis: f64, sh_depth: f64, sh_angle: f64, sh_mat: Material },
    Eggcrate { sh_hdis: f64, sh_depth: f64, sh_vdis: f64, sh_mat: Material },
    VerticalPanel { sh_poh: f64, sh_dis: f64, sh_rad: f64, sh_mat: Material },
}

impl ShadingSpec {
    pub fn family(&self) -> Family {
        match self {
            ShadingSpec::NoShading => Family::NoShading,
            ShadingSpec::Overhang { .. } => Family::Overhang,
            ShadingSpec::Louvers { .. } => Family::Louvers,
            ShadingSpec::Fins { .. } => Family::Fins,
            ShadingSpec::Eggcrate { .. } => Family::Eggcrate,
            ShadingSpec::VerticalPanel { .. } => Family::VerticalPanel,
        }
    }

    pub fn material(&self) -> Option<Material> {
        match *self {
            ShadingSpec::NoShading => None,
            ShadingSpec::Overhang { sh_mat, .. }
            | ShadingSpec::Louvers { sh_mat, .. }
            | ShadingSpec::Fins { sh_mat, .. }
            | ShadingSpec::Eggcrate { sh_mat, .. }
            | ShadingSpec::VerticalPanel { sh_mat, .. } => Some(sh_mat),
        }
    }

    /// Numeric fields in the order of [`Family::shading_axes`].
    pub fn numeric_values(&self) -> Vec<f64> {
        match *self {
            ShadingSpec::NoShading => vec![],
            ShadingSpec::Overhang { sh_dis, sh_depth, sh_tilt, .. }
            | ShadingSpec::Louvers { sh_dis, sh_depth, sh_tilt, .. } => vec![sh_dis, sh_depth, sh_tilt],
            ShadingSpec::Fins { sh_dis, sh_depth, sh_angle, .. } => vec![sh_dis, sh_depth, sh_angle],
            ShadingSpec::Eggcrate { sh_hdis, sh_depth, sh_vdis, .. } => vec![sh_hdis, sh_depth, sh_vdis],
            ShadingSpec::VerticalPanel { sh_poh, sh_dis, sh_rad, .. } => vec![sh_poh, sh_dis, sh_rad],
        }
    }

    /// Builds a shading spec from its numeric fields (in canonical order) and material.
    pub fn from_values(family: Family, values: &[f64], mat: Option<Material>) -> Result<Self> {
        let expected = family.shading_axes().len();
        if values.len() != expected {
            return Err(Error::domain(format!(
                "{family} expects {expected} shading values, got {}",
                values.len()
            )));
        }
        if family == Family::NoShading {
            return Ok(ShadingSpec::NoShading);
        }
        let sh_mat = mat.ok_or_else(|| Error::domain(format!("{family} requires sh_mat")))?;
        let [a, b, c] = [values[0], values[1], values[2]];
        Ok(match family {
            Family::NoShading => unreachable!(),
            Family::Overhang => ShadingSpec::Overhang { sh_dis: a, sh_depth: b, sh_tilt: c, sh_mat },
            Family::Louvers => ShadingSpec::Louvers { sh_dis: a, sh_depth: b, sh_tilt: c, sh_mat },
            Family::Fins => ShadingSpec::Fins { sh_dis: a, sh_depth: b, sh_angle: c, sh_mat },
            Family::Eggcrate => ShadingSpec::Eggcrate { sh_hdis: a, sh_depth: b, sh_vdis: c, sh_mat },
            Family::VerticalPanel => ShadingSpec::VerticalPanel { sh_poh: a, sh_dis: b, sh_rad: c, sh_mat },
        })
    }

    /// Same shading with the other material.
    pub fn with_material(&self, mat: Material) -> Self {
        let mut out = *self;
        match &mut out {
            ShadingSpec::NoShading => {}
            ShadingSpec::Overhang { sh_mat, .. }
            | ShadingSpec::Louvers { sh_mat, .. }
            | ShadingSpec::Fins { sh_mat, .. }
            | ShadingSpec::Eggcrate { sh_mat, .. }
            | ShadingSpec::VerticalPanel { sh_mat, .. } => *sh_mat = mat,
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignAlternative {
    pub id: u32,
    pub room: RoomSpec,
    pub opening: OpeningSpec,
    pub shading: ShadingSpec,
}

impl DesignAlternative {
    pub fn family(&self) -> Family {
        self.shading.family()
    }
}

/// Axis indices of one enumerated alternative.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct GridPoint {
    pub family: Family,
    pub indices: Vec<usize>,
}

impl GridPoint {
    pub fn from_rank(family: Family, rank: usize) -> Result<Self> {
        let sizes = family.axis_sizes();
        let total: usize = sizes.iter().product();
        if rank >= total {
            return Err(Error::domain(format!("id {rank} out of range for {family} ({total})")));
        }
        let mut indices = vec![0; sizes.len()];
        let mut rest = rank;
        for (slot, size) in indices.iter_mut().zip(&sizes).rev() {
            *slot = rest % size;
            rest /= size;
        }
        Ok(GridPoint { family, indices })
    }

    pub fn rank(&self) -> usize {
        self.family
            .axis_sizes()
            .iter()
            .zip(&self.indices)
            .fold(0, |acc, (size, idx)| acc * size + idx)
    }

    pub fn to_alternative(&self) -> DesignAlternative {
        let family = self.family;
        let ix = &self.indices;
        let (width_x, length_y) = ROOM_SIZES[ix[0]];
        let room = RoomSpec::new(width_x, length_y, Orientation::ALL[ix[1]], OBS_ANGLES[ix[2]]);
        let opening = OPENING_LAYOUTS[family.layouts()[ix[3]]].with_glass(GLASS_VT[ix[4]]);
        let axes = family.shading_axes();
        let values: Vec<f64> = axes.iter().enumerate().map(|(k, (_, lv))| lv[ix[5 + k]]).collect();
        let mat = family.has_material().then(|| Material::ALL[ix[5 + axes.len()]]);
        let shading = ShadingSpec::from_values(family, &values, mat).expect("grid point is well formed");
        DesignAlternative { id: self.rank() as u32, room, opening, shading }
    }

    /// Locates an alternative on the grid; `None` if any field is off-grid.
    pub fn of(alt: &DesignAlternative) -> Option<Self> {
        let family = alt.family();
        let mut indices = Vec::with_capacity(9);
        indices.push(
            ROOM_SIZES
                .iter()
                .position(|&(x, y)| close(x, alt.room.width_x) && close(y, alt.room.length_y))?,
        );
        indices.push(alt.room.win_side.index());
        indices.push(level_index(&OBS_ANGLES, alt.room.obs_angle)?);
        indices.push(
            family
                .layouts()
                .iter()
                .position(|&l| OPENING_LAYOUTS[l].matches(&alt.opening))?,
        );
        indices.push(level_index(&GLASS_VT, alt.opening.glass_vt)?);
        for ((_, levels), v) in family.shading_axes().iter().zip(alt.shading.numeric_values()) {
            indices.push(level_index(levels, v)?);
        }
        if let Some(mat) = alt.shading.material() {
            indices.push(mat.index());
        }
        Some(GridPoint { family, indices })
    }
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= EPS
}

fn level_index(levels: &[f64], v: f64) -> Option<usize> {
    levels.iter().position(|&l| close(l, v))
}

/// Full Cartesian product for `family`, in id order.
pub fn enumerate(family: Family) -> Vec<DesignAlternative> {
    (0..family.count())
        .map(|rank| GridPoint::from_rank(family, rank).unwrap().to_alternative())
        .collect()
}

/// Same as [`enumerate`] but addressed by family name.
pub fn enumerate_named(family: &str) -> Result<Vec<DesignAlternative>> {
    Ok(enumerate(family.parse()?))
}

pub fn alternative(family: Family, id: u32) -> Result<DesignAlternative> {
    Ok(GridPoint::from_rank(family, id as usize)?.to_alternative())
}

/// Axis-aligned window rectangle on the glazed wall: `x` runs along the wall
/// (0 at the left edge seen from inside), `z` is height above the floor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowRect {
    pub x0: f64,
    pub x1: f64,
    pub z0: f64,
    pub z1: f64,
}

impl WindowRect {
    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.z1 - self.z0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowLayout {
    pub windows: Vec<WindowRect>,
    pub wall_width: f64,
    pub total_width: f64,
    pub feasible: bool,
}

/// Places `win_num` equal windows on the glazed wall (width `room.width_x`).
///
/// The glazed area is `wwr% × wall_width × ROOM_HEIGHT`; windows are centred
/// with equal gaps between themselves and the wall edges. Layouts whose total
/// width exceeds [`MAX_GLAZED_WIDTH_FRACTION`] of the wall are flagged, not
/// rejected.
pub fn window_layout(room: &RoomSpec, opening: &OpeningSpec) -> WindowLayout {
    let wall = room.width_x;
    let n = opening.win_num.max(1) as f64;
    let total = opening.wwr / 100.0 * wall * ROOM_HEIGHT / opening.win_height;
    let w = total / n;
    let gap = (wall - total) / (n + 1.0);
    let windows = (0..opening.win_num.max(1))
        .map(|k| {
            let x0 = gap + k as f64 * (w + gap);
            WindowRect {
                x0,
                x1: x0 + w,
                z0: opening.win_sill,
                z1: opening.win_sill + opening.win_height,
            }
        })
        .collect();
    let feasible = total <= MAX_GLAZED_WIDTH_FRACTION * wall + EPS
        && opening.win_sill + opening.win_height <= room.height + EPS;
    WindowLayout { windows, wall_width: wall, total_width: total, feasible }
}

/// Geometric feasibility: windows fit the wall, shading elements stay within
/// `sh_depth` of the wall's side edges and the ground, and perforated panels
/// only cover fully glazed façades.
pub fn is_valid(alt: &DesignAlternative) -> bool {
    invalid_reason(alt).is_none()
}

pub fn invalid_reason(alt: &DesignAlternative) -> Option<String> {
    let layout = window_layout(&alt.room, &alt.opening);
    if !layout.feasible {
        return Some(format!(
            "glazed width {:.3} m exceeds {:.0}% of the {:.1} m wall",
            layout.total_width,
            MAX_GLAZED_WIDTH_FRACTION * 100.0,
            layout.wall_width
        ));
    }
    if matches!(alt.shading, ShadingSpec::VerticalPanel { .. })
        && alt.opening.category != OpeningCategory::HighlyGlazed
    {
        return Some("vertical panels require a highly glazed opening".into());
    }
    if !crate::geometry::shading_fits_facade(alt, &layout) {
        return Some("shading elements extend past the façade".into());
    }
    None
}

/// One design parameter as exposed to users: its allowed values within a
/// family and the feature columns that encode it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSpec {
    pub name: String,
    pub unit: String,
    pub values: ParamValues,
    pub columns: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValues {
    Numeric(Vec<f64>),
    Categorical(Vec<String>),
}

impl ParameterSpec {
    /// A parameter with a single admissible value is not a free design choice
    /// within the family.
    pub fn is_free(&self) -> bool {
        match &self.values {
            ParamValues::Numeric(v) => v.len() > 1,
            ParamValues::Categorical(v) => v.len() > 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ColumnKind {
    OneHot,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoricalGroup {
    pub name: String,
    pub levels: Vec<String>,
}

/// Column layout of a family's feature vectors.
///
/// `one-hot(win_side) ⊕ one-hot(sh_mat) ⊕ numeric(room, opening, shading)`;
/// the material group is absent for the unshaded family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    pub family: Family,
    pub columns: Vec<ColumnSpec>,
    pub categorical: Vec<CategoricalGroup>,
}

const BASE_NUMERIC: [&str; 8] =
    ["width_x", "length_y", "obs_angle", "wwr", "win_sill", "win_height", "win_num", "glass_vt"];

impl FeatureSchema {
    pub fn for_family(family: Family) -> Self {
        let mut columns = Vec::new();
        let mut categorical = vec![CategoricalGroup {
            name: "win_side".into(),
            levels: Orientation::ALL.iter().map(|o| o.label().to_string()).collect(),
        }];
        for o in Orientation::ALL {
            columns.push(ColumnSpec { name: format!("win_side_{o}"), kind: ColumnKind::OneHot });
        }
        if family.has_material() {
            categorical.push(CategoricalGroup {
                name: "sh_mat".into(),
                levels: Material::ALL.iter().map(|m| m.label().to_string()).collect(),
            });
            for m in Material::ALL {
                columns.push(ColumnSpec { name: format!("sh_mat_{}", m.label()), kind: ColumnKind::OneHot });
            }
        }
        for name in BASE_NUMERIC {
            columns.push(ColumnSpec { name: name.into(), kind: ColumnKind::Numeric });
        }
        for (name, _) in family.shading_axes() {
            columns.push(ColumnSpec { name: (*name).into(), kind: ColumnKind::Numeric });
        }
        FeatureSchema { family, columns, categorical }
    }

    pub fn len(&self) -> usize {
        self.columns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty()
    }

    pub fn column_names(&self) -> Vec<&str> {
        self.columns.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Mask of one-hot columns (these bypass min-max scaling).
    pub fn one_hot_mask(&self) -> Vec<bool> {
        self.columns.iter().map(|c| c.kind == ColumnKind::OneHot).collect()
    }

    fn numeric_offset(&self) -> usize {
        if self.family.has_material() {
            6
        } else {
            4
        }
    }

    /// Design parameters of the family, one-hot groups folded into one parameter each.
    pub fn parameters(&self) -> Vec<ParameterSpec> {
        let family = self.family;
        let layouts: Vec<&OpeningLayout> = family.layouts().iter().map(|&l| &OPENING_LAYOUTS[l]).collect();
        let distinct = |f: &dyn Fn(&OpeningLayout) -> f64| {
            let mut v: Vec<f64> = layouts.iter().map(|l| f(l)).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let mut params = vec![ParameterSpec {
            name: "win_side".into(),
            unit: "-".into(),
            values: ParamValues::Categorical(Orientation::ALL.iter().map(|o| o.label().into()).collect()),
            columns: vec![0, 1, 2, 3],
        }];
        if family.has_material() {
            params.push(ParameterSpec {
                name: "sh_mat".into(),
                unit: "-".into(),
                values: ParamValues::Categorical(Material::ALL.iter().map(|m| m.label().into()).collect()),
                columns: vec![4, 5],
            });
        }
        let base = self.numeric_offset();
        let numeric: [(&str, &str, Vec<f64>); 8] = [
            ("width_x", "m", ROOM_SIZES.iter().map(|p| p.0).collect()),
            ("length_y", "m", ROOM_SIZES.iter().map(|p| p.1).collect()),
            ("obs_angle", "deg", OBS_ANGLES.to_vec()),
            ("wwr", "%", distinct(&|l| l.wwr)),
            ("win_sill", "m", distinct(&|l| l.win_sill)),
            ("win_height", "m", distinct(&|l| l.win_height)),
            ("win_num", "-", distinct(&|l| l.win_num as f64)),
            ("glass_vt", "%", GLASS_VT.to_vec()),
        ];
        for (k, (name, unit, values)) in numeric.into_iter().enumerate() {
            params.push(ParameterSpec {
                name: name.into(),
                unit: unit.into(),
                values: ParamValues::Numeric(values),
                columns: vec![base + k],
            });
        }
        for (k, (name, levels)) in family.shading_axes().iter().enumerate() {
            let unit = match *name {
                "sh_tilt" | "sh_angle" => "deg",
                "sh_poh" => "fraction",
                _ => "m",
            };
            params.push(ParameterSpec {
                name: (*name).into(),
                unit: unit.into(),
                values: ParamValues::Numeric(levels.to_vec()),
                columns: vec![base + 8 + k],
            });
        }
        params
    }
}

/// Feature vector of `alt` under its family schema.
pub fn encode(alt: &DesignAlternative) -> Vec<f64> {
    let family = alt.family();
    let mut v = Vec::with_capacity(17);
    for o in Orientation::ALL {
        v.push(if o == alt.room.win_side { 1.0 } else { 0.0 });
    }
    if let Some(mat) = alt.shading.material() {
        for m in Material::ALL {
            v.push(if m == mat { 1.0 } else { 0.0 });
        }
    }
    debug_assert_eq!(family.has_material(), alt.shading.material().is_some());
    v.extend([
        alt.room.width_x,
        alt.room.length_y,
        alt.room.obs_angle,
        alt.opening.wwr,
        alt.opening.win_sill,
        alt.opening.win_height,
        alt.opening.win_num as f64,
        alt.opening.glass_vt,
    ]);
    v.extend(alt.shading.numeric_values());
    v
}

#[derive(Debug, Clone, PartialEq)]
pub struct Decoded {
    pub alternative: DesignAlternative,
    /// True when the vector was not exactly a grid point and had to be snapped.
    pub snapped: bool,
}

/// Inverse of [`encode`]. Vectors off the grid are snapped to the nearest
/// grid point and flagged.
pub fn decode(schema: &FeatureSchema, vector: &[f64]) -> Result<Decoded> {
    if vector.len() != schema.len() {
        return Err(Error::domain(format!(
            "{} vector has {} values, schema expects {}",
            schema.family,
            vector.len(),
            schema.len()
        )));
    }
    if vector.iter().any(|v| !v.is_finite()) {
        return Err(Error::domain("feature vector contains non-finite values"));
    }
    let family = schema.family;
    let mut snapped = false;

    let mut one_hot = |cols: &[f64]| -> usize {
        let best = argmax(cols);
        let exact = cols.iter().enumerate().all(|(i, &c)| c == if i == best { 1.0 } else { 0.0 });
        snapped |= !exact;
        best
    };
    let side = one_hot(&vector[0..4]);
    let mat = family.has_material().then(|| one_hot(&vector[4..6]));

    let base = schema.numeric_offset();
    let num = &vector[base..];
    let mut indices = Vec::with_capacity(9);

    let (room_ix, d) = nearest(ROOM_SIZES.iter().map(|&(x, y)| dist(&[x, y], &num[0..2])));
    snapped |= d > EPS;
    indices.push(room_ix);
    indices.push(side);
    let (obs_ix, d) = nearest(OBS_ANGLES.iter().map(|&a| (a - num[2]).abs()));
    snapped |= d > EPS;
    indices.push(obs_ix);
    // layout axes are compared on their natural scales; WWR is in percent
    let (layout_ix, d) = nearest(family.layouts().iter().map(|&l| {
        let l = &OPENING_LAYOUTS[l];
        dist(
            &[l.wwr / 100.0, l.win_sill, l.win_height, l.win_num as f64],
            &[num[3] / 100.0, num[4], num[5], num[6]],
        )
    }));
    snapped |= d > EPS;
    indices.push(layout_ix);
    let (vt_ix, d) = nearest(GLASS_VT.iter().map(|&g| (g - num[7]).abs()));
    snapped |= d > EPS;
    indices.push(vt_ix);
    for (k, (_, levels)) in family.shading_axes().iter().enumerate() {
        let (ix, d) = nearest(levels.iter().map(|&l| (l - num[8 + k]).abs()));
        snapped |= d > EPS;
        indices.push(ix);
    }
    if let Some(m) = mat {
        indices.push(m);
    }
    let alternative = GridPoint { family, indices }.to_alternative();
    Ok(Decoded { alternative, snapped })
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn nearest(it: impl Iterator<Item = f64>) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (i, d) in it.enumerate() {
        if d < best.1 {
            best = (i, d);
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn family_counts() {
        let counts: Vec<usize> = Family::ALL.iter().map(|f| f.count()).collect();
        assert_eq!(counts, vec![648, 23328, 23328, 23328, 15552, 1728]);
        assert_eq!(counts.iter().sum::<usize>(), 87912);
    }

    #[test]
    fn vertical_panel_count_by_brute_force() {
        // count every combination of the raw parameter ranges that a
        // perforated panel can be paired with
        let mut n = 0;
        for _room in ROOM_SIZES {
            for _side in Orientation::ALL {
                for _obs in OBS_ANGLES {
                    for layout in OPENING_LAYOUTS {
                        if layout.category != OpeningCategory::HighlyGlazed {
                            continue;
                        }
                        for _vt in GLASS_VT {
                            for _poh in [0.3, 0.4, 0.5] {
                                for _dis in [0.5, 1.0] {
                                    for _rad in [0.1, 0.2] {
                                        for _mat in Material::ALL {
                                            n += 1;
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        assert_eq!(n, 1728);
        let all = enumerate(Family::VerticalPanel);
        assert_eq!(all.len(), 1728);
        assert!(all.iter().all(|a| a.opening.wwr == 90.0));
    }

    #[test]
    fn unknown_family_is_rejected() {
        assert!(matches!(enumerate_named("awning"), Err(Error::UnknownFamily(_))));
        assert_eq!(enumerate_named("no_shading").unwrap().len(), 648);
    }

    #[test]
    fn ids_are_sequential_ranks() {
        for family in Family::ALL {
            let all = enumerate(family);
            for (i, alt) in all.iter().enumerate().step_by(97) {
                assert_eq!(alt.id as usize, i);
                assert_eq!(GridPoint::of(alt).unwrap().rank(), i);
            }
        }
    }

    #[test]
    fn enumeration_covers_every_range_value() {
        let all = enumerate(Family::Overhang);
        for (x, y) in ROOM_SIZES {
            assert!(all.iter().any(|a| a.room.width_x == x && a.room.length_y == y));
        }
        for layout in OPENING_LAYOUTS {
            assert!(all.iter().any(|a| layout.matches(&a.opening)));
        }
        for tilt in [0.0, 15.0, 30.0] {
            assert!(all
                .iter()
                .any(|a| matches!(a.shading, ShadingSpec::Overhang { sh_tilt, .. } if sh_tilt == tilt)));
        }
        for family in Family::ALL {
            let all = enumerate(family);
            for (k, (_, levels)) in family.shading_axes().iter().enumerate() {
                for &l in levels.iter() {
                    assert!(all.iter().any(|a| a.shading.numeric_values()[k] == l), "{family} axis {k}");
                }
            }
        }
    }

    #[test]
    fn window_width_from_wwr() {
        let room = RoomSpec::new(4.0, 6.0, Orientation::S, 0.0);
        let opening = OPENING_LAYOUTS[1].with_glass(60.0);
        let layout = window_layout(&room, &opening);
        assert_eq!(layout.windows.len(), 2);
        for w in &layout.windows {
            assert_abs_diff_eq!(w.width(), 0.3 * 4.0 * 3.5 / (2.0 * 2.2), epsilon = 1e-12);
            assert_abs_diff_eq!(w.width(), 0.9545, epsilon = 1e-4);
        }
        // equal gaps: left edge, middle, right edge
        let g0 = layout.windows[0].x0;
        let g1 = layout.windows[1].x0 - layout.windows[0].x1;
        let g2 = 4.0 - layout.windows[1].x1;
        assert_abs_diff_eq!(g0, g1, epsilon = 1e-12);
        assert_abs_diff_eq!(g1, g2, epsilon = 1e-12);
        assert!(layout.feasible);

        let room = RoomSpec::new(3.0, 4.0, Orientation::S, 0.0);
        let glazed = window_layout(&room, &OPENING_LAYOUTS[8].with_glass(60.0));
        assert_abs_diff_eq!(glazed.windows[0].width(), 2.779, epsilon = 1e-3);
        assert!(glazed.feasible);

        let wide = window_layout(&room, &OPENING_LAYOUTS[4].with_glass(60.0));
        assert_abs_diff_eq!(wide.total_width, 6.3 / 2.2, epsilon = 1e-12);
        assert!(!wide.feasible);
    }

    #[test]
    fn validity_rules() {
        let plain = enumerate(Family::NoShading);
        assert!(plain.iter().filter(|a| a.opening.wwr == 30.0).all(is_valid));

        let narrow = plain
            .iter()
            .find(|a| {
                a.room.width_x == 3.0 && a.opening.wwr == 60.0 && a.opening.win_num == 1 && a.opening.win_height == 2.2
            })
            .unwrap();
        assert!(!is_valid(narrow));

        let mut panel = enumerate(Family::VerticalPanel)[0];
        assert!(is_valid(&panel));
        panel.opening = OPENING_LAYOUTS[0].with_glass(60.0);
        assert!(!is_valid(&panel));
    }

    #[test]
    fn one_hot_orientation() {
        let alt = enumerate(Family::NoShading)
            .into_iter()
            .find(|a| a.room.win_side == Orientation::S)
            .unwrap();
        assert_eq!(&encode(&alt)[0..4], &[0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn schema_matches_encoding_length() {
        for family in Family::ALL {
            let schema = FeatureSchema::for_family(family);
            let alt = &enumerate(family)[0];
            assert_eq!(encode(alt).len(), schema.len());
            let covered: usize = schema.parameters().iter().map(|p| p.columns.len()).sum();
            assert_eq!(covered, schema.len());
        }
    }

    #[test]
    fn decode_snaps_off_grid_vectors() {
        let schema = FeatureSchema::for_family(Family::Overhang);
        let alt = enumerate(Family::Overhang)[1234];
        let mut v = encode(&alt);
        let exact = decode(&schema, &v).unwrap();
        assert!(!exact.snapped);
        assert_eq!(exact.alternative, alt);

        let depth = schema.column_index("sh_depth").unwrap();
        v[depth] += 0.05;
        let off = decode(&schema, &v).unwrap();
        assert!(off.snapped);
        assert_eq!(off.alternative, alt);

        assert!(decode(&schema, &v[1..]).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn any_alternative() -> impl Strategy<Value = DesignAlternative> {
            prop::sample::select(Family::ALL.to_vec())
                .prop_flat_map(|f| (Just(f), 0..f.count()))
                .prop_map(|(f, rank)| GridPoint::from_rank(f, rank).unwrap().to_alternative())
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(1000))]

            #[test]
            fn encode_decode_round_trip(alt in any_alternative()) {
                let schema = FeatureSchema::for_family(alt.family());
                let back = decode(&schema, &encode(&alt)).unwrap();
                prop_assert!(!back.snapped);
                prop_assert_eq!(back.alternative, alt);
            }

            #[test]
            fn rank_round_trip(alt in any_alternative()) {
                let gp = GridPoint::of(&alt).unwrap();
                prop_assert_eq!(gp.rank() as u32, alt.id);
            }
        }
    }
}
