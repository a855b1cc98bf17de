//! Template meshes: vertex positions over a shared triangle connectivity.
//!
//! Every mesh of a dataset points at the same [`Template`], so connectivity is
//! stored once and compared by identity. Pose has no field of its own; it only
//! exists in the vertex positions.

mod obj;

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use crate::scalar::Scalar;

pub use obj::{load_mesh, save_mesh, write_obj};

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("mesh file not found: {0}")]
    MissingFile(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: face has {count} vertices, only triangles are supported")]
    NonTriangularFace { line: usize, count: usize },
    #[error("line {line}: vertex index {index} out of range for {num_vertices} vertices")]
    IndexOutOfRange {
        line: usize,
        index: i64,
        num_vertices: usize,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("mesh has no faces")]
    NoFaces,
    #[error("face {face} references vertex {index} but the mesh has {num_vertices} vertices")]
    FaceIndex {
        face: usize,
        index: usize,
        num_vertices: usize,
    },
    #[error("vertex {0} is not referenced by any face")]
    UnreferencedVertex(usize),
    #[error("vertex count mismatch: expected {expected}, found {found}")]
    VertexCountMismatch { expected: usize, found: usize },
    #[error("template mismatch: {left} vs {right}")]
    TemplateMismatch { left: String, right: String },
    #[error("vertex {0} has a non-finite coordinate")]
    NonFinite(usize),
}

/// Shared triangle connectivity, identified by a digest of its faces.
#[derive(Debug, PartialEq, Eq)]
pub struct Template {
    id: String,
    num_vertices: usize,
    faces: Vec<[usize; 3]>,
}

impl Template {
    pub fn new(num_vertices: usize, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if faces.is_empty() {
            return Err(MeshError::NoFaces);
        }
        let mut referenced = vec![false; num_vertices];
        for (f, face) in faces.iter().enumerate() {
            for &index in face {
                if index >= num_vertices {
                    return Err(MeshError::FaceIndex {
                        face: f,
                        index,
                        num_vertices,
                    });
                }
                referenced[index] = true;
            }
        }
        if let Some(v) = referenced.iter().position(|r| !r) {
            return Err(MeshError::UnreferencedVertex(v));
        }
        let id = template_digest(num_vertices, &faces);
        Ok(Self {
            id,
            num_vertices,
            faces,
        })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn num_vertices(&self) -> usize {
        self.num_vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    /// Deduplicated undirected edges of the connectivity.
    pub fn edge_set(&self) -> EdgeSet {
        let mut set = BTreeSet::new();
        for &[a, b, c] in &self.faces {
            for (u, v) in [(a, b), (b, c), (c, a)] {
                set.insert((u.min(v), u.max(v)));
            }
        }
        EdgeSet {
            edges: set.into_iter().collect(),
        }
    }
}

fn template_digest(num_vertices: usize, faces: &[[usize; 3]]) -> String {
    let mut hasher = Sha256::new();
    hasher.update((num_vertices as u64).to_le_bytes());
    for face in faces {
        for &i in face {
            hasher.update((i as u64).to_le_bytes());
        }
    }
    let digest = hasher.finalize();
    digest[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// Triangle mesh on a shared template. Vertices are in meters unless stated otherwise.
#[derive(Clone, Debug)]
pub struct Mesh<T> {
    vertices: Vec<[T; 3]>,
    template: Arc<Template>,
}

impl<T: Scalar> Mesh<T> {
    /// Builds a mesh and a fresh template from raw faces.
    pub fn new(vertices: Vec<[T; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        let template = Arc::new(Template::new(vertices.len(), faces)?);
        Self::with_template(vertices, template)
    }

    pub fn with_template(vertices: Vec<[T; 3]>, template: Arc<Template>) -> Result<Self, MeshError> {
        if vertices.len() != template.num_vertices() {
            return Err(MeshError::VertexCountMismatch {
                expected: template.num_vertices(),
                found: vertices.len(),
            });
        }
        if let Some(v) = vertices
            .iter()
            .position(|p| p.iter().any(|c| !c.is_finite()))
        {
            return Err(MeshError::NonFinite(v));
        }
        Ok(Self { vertices, template })
    }

    /// Builds a mesh from a `3 × num_vertices` coordinate array.
    pub fn from_columns(columns: &Array2<T>, template: Arc<Template>) -> Result<Self, MeshError> {
        if columns.nrows() != 3 {
            return Err(MeshError::Parse {
                line: 0,
                message: format!("expected 3 coordinate rows, got {}", columns.nrows()),
            });
        }
        let vertices = columns
            .columns()
            .into_iter()
            .map(|c| [c[0], c[1], c[2]])
            .collect();
        Self::with_template(vertices, template)
    }

    /// `3 × num_vertices` coordinate array, the layout the networks consume.
    pub fn to_columns(&self) -> Array2<T> {
        Array2::from_shape_fn((3, self.vertices.len()), |(c, v)| self.vertices[v][c])
    }

    pub fn vertices(&self) -> &[[T; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        self.template.faces()
    }

    pub fn template(&self) -> &Arc<Template> {
        &self.template
    }

    pub fn template_id(&self) -> &str {
        self.template.id()
    }

    pub fn num_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn same_template(&self, other: &Mesh<T>) -> Result<(), MeshError> {
        if self.num_vertices() != other.num_vertices() {
            return Err(MeshError::VertexCountMismatch {
                expected: self.num_vertices(),
                found: other.num_vertices(),
            });
        }
        if Arc::ptr_eq(&self.template, &other.template) || self.template == other.template {
            Ok(())
        } else {
            Err(MeshError::TemplateMismatch {
                left: self.template_id().to_owned(),
                right: other.template_id().to_owned(),
            })
        }
    }

    pub fn edge_set(&self) -> EdgeSet {
        self.template.edge_set()
    }

    pub fn distance_matrix(&self) -> DistanceMatrix<T> {
        DistanceMatrix::from_points(&self.vertices)
    }

    /// Axis-aligned bounding box as `(min, max)`.
    pub fn bounding_box(&self) -> ([T; 3], [T; 3]) {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for p in &self.vertices {
            for c in 0..3 {
                lo[c] = lo[c].min(p[c]);
                hi[c] = hi[c].max(p[c]);
            }
        }
        (lo, hi)
    }

    pub fn bounding_box_diagonal(&self) -> T {
        let (lo, hi) = self.bounding_box();
        (0..3)
            .map(|c| (hi[c] - lo[c]) * (hi[c] - lo[c]))
            .sum::<T>()
            .sqrt()
    }

    /// Same connectivity at another precision.
    pub fn cast<U: Scalar>(&self) -> Mesh<U> {
        Mesh {
            vertices: self
                .vertices
                .iter()
                .map(|p| p.map(|c| U::from_f64_rounded(c.to_f64_lossless())))
                .collect(),
            template: Arc::clone(&self.template),
        }
    }
}

/// Deduplicated undirected edges `(a, b)` with `a < b`, sorted.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EdgeSet {
    edges: Vec<(usize, usize)>,
}

impl EdgeSet {
    /// Normalizes each pair to `(min, max)`, sorts and deduplicates.
    pub fn from_edges(edges: Vec<(usize, usize)>) -> Self {
        let set: BTreeSet<_> = edges.into_iter().map(|(a, b)| (a.min(b), a.max(b))).collect();
        Self {
            edges: set.into_iter().collect(),
        }
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }
}

/// Dense symmetric matrix of Euclidean vertex distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix<T> {
    values: Array2<T>,
}

impl<T: Scalar> DistanceMatrix<T> {
    pub fn from_points(points: &[[T; 3]]) -> Self {
        let n = points.len();
        let mut values = Array2::zeros((n, n));
        for a in 0..n {
            for b in (a + 1)..n {
                let d = distance(&points[a], &points[b]);
                values[[a, b]] = d;
                values[[b, a]] = d;
            }
        }
        Self { values }
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn get(&self, a: usize, b: usize) -> T {
        self.values[[a, b]]
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }

    /// Number of strictly upper-triangular entries, `N (N - 1) / 2`.
    pub fn upper_count(&self) -> usize {
        let n = self.size();
        n * n.saturating_sub(1) / 2
    }
}

#[inline]
pub(crate) fn distance<T: Scalar>(a: &[T; 3], b: &[T; 3]) -> T {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    (dx * dx + dy * dy + dz * dz).sqrt()
}

impl fmt::Display for Template {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "template {} ({} vertices, {} faces)",
            self.id,
            self.num_vertices,
            self.faces.len()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn two_triangles() -> Mesh<f64> {
        Mesh::new(
            vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]],
            vec![[0, 1, 2], [1, 3, 2]],
        )
        .unwrap()
    }

    #[test]
    fn single_triangle_edges() {
        let m = Mesh::new(
            vec![[0.0f64, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        )
        .unwrap();
        assert_eq!(m.edge_set().edges(), &[(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn shared_edge_is_not_duplicated() {
        let e = two_triangles().edge_set();
        assert_eq!(e.len(), 5);
        assert_eq!(e.edges().iter().filter(|&&p| p == (1, 2)).count(), 1);
    }

    #[test]
    fn distance_345() {
        let d = DistanceMatrix::from_points(&[[0.0f64, 0.0, 0.0], [3.0, 4.0, 0.0]]);
        assert_eq!(d.get(0, 1), 5.0);
        assert_eq!(d.get(1, 0), 5.0);
        assert_eq!(d.get(0, 0), 0.0);
        assert_eq!(d.upper_count(), 1);
    }

    #[test]
    fn rejects_invalid_templates() {
        assert!(matches!(Template::new(3, vec![]), Err(MeshError::NoFaces)));
        assert!(matches!(
            Template::new(3, vec![[0, 1, 3]]),
            Err(MeshError::FaceIndex { index: 3, .. })
        ));
        assert!(matches!(
            Template::new(4, vec![[0, 1, 2]]),
            Err(MeshError::UnreferencedVertex(3))
        ));
    }

    #[test]
    fn template_identity_follows_faces() {
        let a = two_triangles();
        let b = two_triangles();
        assert_eq!(a.template_id(), b.template_id());
        assert!(a.same_template(&b).is_ok());
        let c = Mesh::new(a.vertices().to_vec(), vec![[0, 1, 2], [1, 2, 3]]).unwrap();
        assert_ne!(a.template_id(), c.template_id());
        assert!(matches!(
            a.same_template(&c),
            Err(MeshError::TemplateMismatch { .. })
        ));
    }

    #[test]
    fn columns_round_trip() {
        let m = two_triangles();
        let back = Mesh::from_columns(&m.to_columns(), Arc::clone(m.template())).unwrap();
        assert_eq!(back.vertices(), m.vertices());
    }

    #[test]
    fn rejects_non_finite_vertices() {
        let err = Mesh::new(
            vec![[0.0f64, f64::NAN, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            vec![[0, 1, 2]],
        );
        assert!(matches!(err, Err(MeshError::NonFinite(0))));
    }
}
