//! Problem definitions: manufactured solutions and the flow benchmarks.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use gwg_core::assembly::{BoundaryData, ProblemSpec, VectorField};
use gwg_core::mesh::{self, side, Mesh, Rect};
use gwg_core::PressureGauge;

/// Boundary tags used by the obstacle fixtures.
pub mod tag {
    pub const BOTTOM: i32 = 1;
    pub const RIGHT: i32 = 2;
    pub const TOP: i32 = 3;
    /// Left side outside the inflow slots.
    pub const LEFT: i32 = 4;
    /// Left side slots `1.5 <= y <= 2` and `2.5 <= y <= 3`.
    pub const INFLOW: i32 = 5;
    pub const OBSTACLE: i32 = 6;
}

/// Inflow speed of the channel variant.
pub const CHANNEL_ALPHA: f64 = 100.0;
/// Height of the obstacle channel.
pub const CHANNEL_HEIGHT: f64 = 4.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Case {
    /// Polynomial solution on uniform meshes of the unit square.
    #[value(name = "1", alias = "case1", alias = "case1_uniform")]
    Case1,
    /// Trigonometric solution on the unstructured fixture series.
    #[value(name = "2", alias = "case2", alias = "case2_gmsh")]
    Case2,
    /// Lid-driven cavity on the unit square.
    Cavity,
    /// Uniform stream past one cylinder (stationary Stokes).
    Cylinder1,
    /// Uniform stream past three cylinders (stationary Stokes).
    Cylinder3,
    /// Slot inflow past three cylinders (stationary Stokes).
    #[value(name = "cylinder3_channel", alias = "cylinder3-channel")]
    Cylinder3Channel,
    /// Test Case 1 fields on a user mesh given by `--mesh`.
    Custom,
}

impl Case {
    pub fn has_exact_solution(self) -> bool {
        matches!(self, Case::Case1 | Case::Case2 | Case::Custom)
    }

    pub fn name(self) -> &'static str {
        match self {
            Case::Case1 => "case1",
            Case::Case2 => "case2",
            Case::Cavity => "cavity",
            Case::Cylinder1 => "cylinder1",
            Case::Cylinder3 => "cylinder3",
            Case::Cylinder3Channel => "cylinder3_channel",
            Case::Custom => "custom",
        }
    }

    /// Problem data of the case.
    pub fn problem(self) -> ProblemSpec {
        match self {
            Case::Case1 | Case::Custom => polynomial_case(),
            Case::Case2 => trigonometric_case(),
            Case::Cavity => cavity([1.0, 0.0]),
            Case::Cylinder1 | Case::Cylinder3 => uniform_stream(),
            Case::Cylinder3Channel => slot_channel(CHANNEL_ALPHA),
        }
    }
}

fn constant(v: [f64; 2]) -> VectorField {
    Arc::new(move |_| v)
}

/// `u = (x^2 y, -x y^2)`, `p = 10 (2x - 1)(2y - 1)`, unit viscosity.
pub fn polynomial_case() -> ProblemSpec {
    ProblemSpec::manufactured(
        Arc::new(|[x, y]| [x * x * y, -x * y * y]),
        Arc::new(|[x, y]| [[2.0 * x * y, x * x], [-y * y, -2.0 * x * y]]),
        Arc::new(|[x, y]| 10.0 * (2.0 * x - 1.0) * (2.0 * y - 1.0)),
        // -lap u + grad p
        Arc::new(|[x, y]| [-2.0 * y + 20.0 * (2.0 * y - 1.0), 2.0 * x + 20.0 * (2.0 * x - 1.0)]),
    )
}

/// `u = (-cos x sin y, sin x cos y)`, `p = exp(x^2) sin y`, unit viscosity.
pub fn trigonometric_case() -> ProblemSpec {
    ProblemSpec::manufactured(
        Arc::new(|[x, y]: [f64; 2]| [-x.cos() * y.sin(), x.sin() * y.cos()]),
        Arc::new(|[x, y]: [f64; 2]| [[x.sin() * y.sin(), -x.cos() * y.cos()], [x.cos() * y.cos(), -x.sin() * y.sin()]]),
        Arc::new(|[x, y]: [f64; 2]| (x * x).exp() * y.sin()),
        // -lap u = 2 u
        Arc::new(|[x, y]: [f64; 2]| {
            let e = (x * x).exp();
            [-2.0 * x.cos() * y.sin() + 2.0 * x * e * y.sin(), 2.0 * x.sin() * y.cos() + e * y.cos()]
        }),
    )
}

/// Unit square with the lid `y = 1` moving at `lid`, no slip elsewhere,
/// pressure pinned at the origin.
pub fn cavity(lid: [f64; 2]) -> ProblemSpec {
    let zero = constant([0.0, 0.0]);
    let data = BTreeMap::from([
        (side::BOTTOM, zero.clone()),
        (side::RIGHT, zero.clone()),
        (side::TOP, constant(lid)),
        (side::LEFT, zero),
    ]);
    ProblemSpec::new(constant([0.0, 0.0]), BoundaryData::Tagged(data)).with_gauge(PressureGauge::Point([0.0, 0.0]))
}

/// `u = (1, 0)` on the whole outer box, no slip on the obstacles.
pub fn uniform_stream() -> ProblemSpec {
    let one = constant([1.0, 0.0]);
    let mut data: BTreeMap<i32, VectorField> =
        [tag::BOTTOM, tag::RIGHT, tag::TOP, tag::LEFT, tag::INFLOW].into_iter().map(|t| (t, one.clone())).collect();
    data.insert(tag::OBSTACLE, constant([0.0, 0.0]));
    ProblemSpec::new(constant([0.0, 0.0]), BoundaryData::Tagged(data))
}

/// `(alpha, 0)` through the left slots, `(alpha / 4.5, 0)` on the right side,
/// no slip everywhere else.
pub fn slot_channel(alpha: f64) -> ProblemSpec {
    let zero = constant([0.0, 0.0]);
    let mut data: BTreeMap<i32, VectorField> =
        [tag::BOTTOM, tag::TOP, tag::LEFT, tag::OBSTACLE].into_iter().map(|t| (t, zero.clone())).collect();
    data.insert(tag::INFLOW, constant([alpha, 0.0]));
    data.insert(tag::RIGHT, constant([alpha / CHANNEL_HEIGHT, 0.0]));
    ProblemSpec::new(constant([0.0, 0.0]), BoundaryData::Tagged(data))
}

/// Mesh sizes of the uniform series.
pub const CASE1_LEVELS: [usize; 4] = [16, 32, 64, 128];
/// Nominal mesh sizes of the unstructured fixture series.
pub const CASE2_LEVELS: [usize; 4] = [10, 20, 40, 80];
/// Cavity mesh size.
pub const CAVITY_N: usize = 16;

/// Directory holding the committed mesh fixtures.
pub fn fixture_dir() -> PathBuf {
    if let Ok(dir) = std::env::var("GWG_FIXTURES") {
        return PathBuf::from(dir);
    }
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// Fixture mesh `square_h<n>.msh` with nominal size `1/n`.
pub fn square_fixture(n: usize) -> Result<Mesh, mesh::MeshError> {
    Ok(mesh::gmsh::read_gmsh(&fixture_dir().join(format!("square_h{n}.msh")))?.with_h(1.0 / n as f64))
}

pub fn obstacle_fixture(case: Case) -> Option<PathBuf> {
    match case {
        Case::Cylinder1 => Some(fixture_dir().join("cylinder1.msh")),
        Case::Cylinder3 | Case::Cylinder3Channel => Some(fixture_dir().join("cylinder3.msh")),
        _ => None,
    }
}

/// Uniform `n x n` mesh of the unit square with the default diagonal.
pub fn unit_square(n: usize) -> Result<Mesh, mesh::MeshError> {
    mesh::uniform_triangulation(n, Rect::UNIT)
}
