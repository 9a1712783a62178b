//! Chain loading from a native JSON document or a minimal URDF subset
//! (`robot`, `link`, `joint` with `origin`, `axis`, `limit`).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::{Joint, JointKind, KinematicChain};
use crate::error::{Error, Result};
use crate::geom::RigidTransform;

fn load_err(element: impl Into<String>, msg: impl Into<String>) -> Error {
    Error::ChainLoad {
        element: element.into(),
        msg: msg.into(),
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct OriginDoc {
    #[serde(default)]
    pub xyz: [f64; 3],
    #[serde(default)]
    pub rpy: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct JointDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub kind: JointKind,
    #[serde(default)]
    pub origin: OriginDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub limits: Option<[f64; 2]>,
}

/// Native chain schema:
/// `{"name", "joints":[{"kind","origin":{"xyz","rpy"},"axis","limits"}], "base_mesh"}`.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ChainDocument {
    #[serde(default)]
    pub name: String,
    pub joints: Vec<JointDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub base_mesh: Option<PathBuf>,
}

impl ChainDocument {
    pub fn from_chain(chain: &KinematicChain<f64>) -> Self {
        Self {
            name: chain.name.clone(),
            base_mesh: chain.base_mesh.clone(),
            joints: chain
                .joints
                .iter()
                .map(|j| {
                    let [x, y, z] = [j.origin.translation.x, j.origin.translation.y, j.origin.translation.z];
                    JointDoc {
                        name: Some(j.name.clone()),
                        kind: j.kind,
                        origin: OriginDoc { xyz: [x, y, z], rpy: j.origin.euler_xyz() },
                        axis: (j.kind == JointKind::Revolute).then(|| [j.axis.x, j.axis.y, j.axis.z]),
                        limits: j.limits.map(|(a, b)| [a, b]),
                    }
                })
                .collect(),
        }
    }

    pub fn into_chain(self) -> Result<KinematicChain<f64>> {
        let mut joints = Vec::with_capacity(self.joints.len());
        for (i, jd) in self.joints.into_iter().enumerate() {
            let name = jd.name.unwrap_or_else(|| format!("joint_{i}"));
            let path = format!("joints[{i}]");
            let origin = RigidTransform::from_xyz_rpy(jd.origin.xyz, jd.origin.rpy);
            joints.push(match jd.kind {
                JointKind::Fixed => Joint::fixed(name, origin),
                JointKind::Revolute => {
                    let axis = jd.axis.ok_or_else(|| load_err(format!("{path}/axis"), "missing axis"))?;
                    let [lo, hi] = jd.limits.ok_or_else(|| load_err(format!("{path}/limits"), "missing limits"))?;
                    Joint::revolute(name, origin, Vector3::from(axis), (lo, hi))
                        .map_err(|e| load_err(path.clone(), e.to_string()))?
                }
            });
        }
        let mut chain = KinematicChain::new(self.name, joints)?;
        chain.base_mesh = self.base_mesh;
        Ok(chain)
    }
}

pub fn parse_chain_json(text: &str) -> Result<KinematicChain<f64>> {
    let doc: ChainDocument = serde_json::from_str(text)?;
    doc.into_chain()
}

pub fn load_chain_json(path: impl AsRef<Path>) -> Result<KinematicChain<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut chain = parse_chain_json(&text)?;
    resolve_mesh(&mut chain, path);
    Ok(chain)
}

/// Dispatches on extension: `.urdf`/`.xml` or JSON.
pub fn load_chain(path: impl AsRef<Path>) -> Result<KinematicChain<f64>> {
    let path = path.as_ref();
    match crate::cloud::io_ext(path).as_str() {
        "urdf" | "xml" => load_urdf(path),
        _ => load_chain_json(path),
    }
}

pub fn load_urdf(path: impl AsRef<Path>) -> Result<KinematicChain<f64>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut chain = parse_urdf(&text)?;
    resolve_mesh(&mut chain, path);
    Ok(chain)
}

fn resolve_mesh(chain: &mut KinematicChain<f64>, doc: &Path) {
    if let (Some(mesh), Some(dir)) = (chain.base_mesh.as_mut(), doc.parent()) {
        if mesh.is_relative() {
            *mesh = dir.join(&*mesh);
        }
    }
}

fn parse_floats<const N: usize>(s: &str, element: &str) -> Result<[f64; N]> {
    let v: Vec<f64> = s
        .split_whitespace()
        .map(str::parse)
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| load_err(element, format!("bad number list `{s}`")))?;
    v.try_into()
        .map_err(|_| load_err(element, format!("expected {N} numbers in `{s}`")))
}

struct UrdfJoint<'a> {
    node: roxmltree::Node<'a, 'a>,
    name: String,
    parent: String,
    child: String,
}

pub fn parse_urdf(text: &str) -> Result<KinematicChain<f64>> {
    let doc = roxmltree::Document::parse(text).map_err(|e| load_err("robot", e.to_string()))?;
    let robot = doc.root_element();
    if robot.tag_name().name() != "robot" {
        return Err(load_err(robot.tag_name().name(), "root element must be <robot>"));
    }
    let robot_name = robot.attribute("name").unwrap_or_default().to_string();

    let links: Vec<roxmltree::Node> = robot.children().filter(|n| n.has_tag_name("link")).collect();
    let mut joints = Vec::new();
    for node in robot.children().filter(|n| n.has_tag_name("joint")) {
        let name = node.attribute("name").unwrap_or_default().to_string();
        let path = format!("robot/joint[{name}]");
        let link_of = |tag: &str| -> Result<String> {
            node.children()
                .find(|c| c.has_tag_name(tag))
                .and_then(|c| c.attribute("link"))
                .map(str::to_owned)
                .ok_or_else(|| load_err(format!("{path}/{tag}"), "missing link attribute"))
        };
        joints.push(UrdfJoint { node, parent: link_of("parent")?, child: link_of("child")?, name });
    }

    let mut by_parent: HashMap<&str, Vec<&UrdfJoint>> = HashMap::new();
    for j in &joints {
        by_parent.entry(j.parent.as_str()).or_default().push(j);
    }
    let children: std::collections::HashSet<&str> = joints.iter().map(|j| j.child.as_str()).collect();
    let roots: Vec<&str> = links
        .iter()
        .filter_map(|l| l.attribute("name"))
        .filter(|n| !children.contains(n))
        .collect();
    let root = match roots.as_slice() {
        [r] => *r,
        [] => return Err(load_err("robot", "no root link")),
        _ => return Err(load_err("robot", format!("multiple root links: {roots:?}"))),
    };

    let mut chain_joints = Vec::new();
    let mut link = root;
    while let Some(out) = by_parent.get(link) {
        if out.len() > 1 {
            return Err(load_err(format!("robot/link[{link}]"), "branched tree: link has several child joints"));
        }
        let j = out[0];
        chain_joints.push(convert_joint(j)?);
        link = &j.child;
        if chain_joints.len() > joints.len() {
            return Err(load_err("robot", "cycle in joint graph"));
        }
    }

    let base_mesh = links
        .iter()
        .find(|l| l.attribute("name") == Some(root))
        .and_then(|l| l.descendants().find(|d| d.has_tag_name("mesh")))
        .and_then(|m| m.attribute("filename"))
        .map(|f| PathBuf::from(f.trim_start_matches("file://")));

    let mut chain = KinematicChain::new(robot_name, chain_joints)?;
    chain.base_mesh = base_mesh;
    Ok(chain)
}

fn convert_joint(j: &UrdfJoint) -> Result<Joint<f64>> {
    let path = format!("robot/joint[{}]", j.name);
    let kind = j.node.attribute("type").unwrap_or_default();
    let origin = match j.node.children().find(|c| c.has_tag_name("origin")) {
        Some(o) => {
            let xyz = o.attribute("xyz").map(|s| parse_floats::<3>(s, &format!("{path}/origin"))).transpose()?;
            let rpy = o.attribute("rpy").map(|s| parse_floats::<3>(s, &format!("{path}/origin"))).transpose()?;
            RigidTransform::from_xyz_rpy(xyz.unwrap_or_default(), rpy.unwrap_or_default())
        }
        None => RigidTransform::identity(),
    };
    let limit = j.node.children().find(|c| c.has_tag_name("limit"));
    let bounds = limit.and_then(|l| {
        let lo = l.attribute("lower")?.trim().parse::<f64>().ok()?;
        let hi = l.attribute("upper")?.trim().parse::<f64>().ok()?;
        Some((lo, hi))
    });
    match kind {
        "fixed" => Ok(Joint::fixed(j.name.clone(), origin)),
        "revolute" | "continuous" => {
            let Some(bounds) = bounds else {
                let what = if kind == "continuous" { "continuous joint without limits" } else { "missing lower/upper limit" };
                return Err(load_err(format!("{path}/limit"), what));
            };
            let axis = j
                .node
                .children()
                .find(|c| c.has_tag_name("axis"))
                .and_then(|a| a.attribute("xyz"))
                .ok_or_else(|| load_err(format!("{path}/axis"), "missing axis"))?;
            let axis = parse_floats::<3>(axis, &format!("{path}/axis"))?;
            Joint::revolute(j.name.clone(), origin, Vector3::from(axis), bounds)
                .map_err(|e| load_err(path, e.to_string()))
        }
        other => Err(load_err(path, format!("unsupported joint type `{other}`"))),
    }
}
