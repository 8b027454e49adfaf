//! Folder structure the operator arranges actions in.
//!
//! Nodes are addressed by index paths from the root folder. The tree only
//! holds references: the same action may appear in several folders and no
//! edit ever creates or destroys a registered action.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::{ActionError, ActionId, ActionRegistry};

/// Index path from the root folder; the empty path is the root itself.
pub type NodePath = Vec<usize>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TreeNode {
    Folder(Folder),
    Action(ActionId),
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Folder {
    pub name: String,
    #[serde(default)]
    pub children: Vec<TreeNode>,
}

impl Folder {
    pub fn new(name: &str) -> Self {
        Self {
            name: name.into(),
            children: Vec::new(),
        }
    }

    fn has_child_folder(&self, name: &str) -> bool {
        self.children
            .iter()
            .any(|c| matches!(c, TreeNode::Folder(f) if f.name == name))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ActionTree {
    pub root: Folder,
}

impl ActionTree {
    pub fn new() -> Self {
        Self { root: Folder::new("") }
    }

    pub fn node(&self, path: &[usize]) -> Option<&TreeNode> {
        let (last, parents) = path.split_last()?;
        self.folder(parents)?.children.get(*last)
    }

    pub fn folder(&self, path: &[usize]) -> Option<&Folder> {
        let mut f = &self.root;
        for i in path {
            match f.children.get(*i)? {
                TreeNode::Folder(sub) => f = sub,
                TreeNode::Action(_) => return None,
            }
        }
        Some(f)
    }

    fn folder_mut(&mut self, path: &[usize]) -> Result<&mut Folder, ActionError> {
        let mut f = &mut self.root;
        for i in path {
            match f.children.get_mut(*i) {
                Some(TreeNode::Folder(sub)) => f = sub,
                _ => return Err(ActionError::NotFound(alloc::format!("folder at {path:?}"))),
            }
        }
        Ok(f)
    }

    /// Index path of the first folder reached by following `names`.
    pub fn find_folder(&self, names: &[&str]) -> Option<NodePath> {
        let mut f = &self.root;
        let mut path = Vec::new();
        for name in names {
            let (i, sub) = f.children.iter().enumerate().find_map(|(i, c)| match c {
                TreeNode::Folder(sub) if sub.name == *name => Some((i, sub)),
                _ => None,
            })?;
            path.push(i);
            f = sub;
        }
        Some(path)
    }

    /// Every action reference in depth-first order.
    pub fn references(&self) -> Vec<&ActionId> {
        fn walk<'a>(f: &'a Folder, out: &mut Vec<&'a ActionId>) {
            for c in &f.children {
                match c {
                    TreeNode::Action(id) => out.push(id),
                    TreeNode::Folder(sub) => walk(sub, out),
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Every reference resolves and sibling folder names are unique.
    pub fn validate(&self, registry: &ActionRegistry) -> Result<(), Vec<String>> {
        fn walk(f: &Folder, reg: &ActionRegistry, path: &mut Vec<usize>, errs: &mut Vec<String>) {
            for (i, c) in f.children.iter().enumerate() {
                path.push(i);
                match c {
                    TreeNode::Action(id) if !reg.contains(id) => {
                        errs.push(alloc::format!("tree node {path:?} references unknown action `{id}`"))
                    }
                    TreeNode::Action(_) => {}
                    TreeNode::Folder(sub) => {
                        if sub.name.is_empty() {
                            errs.push(alloc::format!("folder at {path:?} has an empty name"));
                        }
                        let dupes = f
                            .children
                            .iter()
                            .filter(|o| matches!(o, TreeNode::Folder(x) if x.name == sub.name))
                            .count();
                        if dupes > 1 {
                            errs.push(alloc::format!("folder name `{}` repeated at {path:?}", sub.name));
                        }
                        walk(sub, reg, path, errs);
                    }
                }
                path.pop();
            }
        }
        let mut errs = Vec::new();
        walk(&self.root, registry, &mut Vec::new(), &mut errs);
        if errs.is_empty() {
            Ok(())
        } else {
            Err(errs)
        }
    }

    /// Inserts a reference to a registered action (copy from the all-actions
    /// list). `position` is clamped to the folder length.
    pub fn insert_action(
        &mut self,
        registry: &ActionRegistry,
        folder: &[usize],
        position: usize,
        id: ActionId,
    ) -> Result<NodePath, ActionError> {
        if !registry.contains(&id) {
            return Err(ActionError::NotFound(id.0));
        }
        let f = self.folder_mut(folder)?;
        let at = position.min(f.children.len());
        f.children.insert(at, TreeNode::Action(id));
        let mut path = folder.to_vec();
        path.push(at);
        Ok(path)
    }

    pub fn add_folder(&mut self, parent: &[usize], position: usize, name: &str) -> Result<NodePath, ActionError> {
        if name.trim().is_empty() {
            return Err(ActionError::Validation("empty folder name".into()));
        }
        let f = self.folder_mut(parent)?;
        if f.has_child_folder(name) {
            return Err(ActionError::Duplicate(name.into()));
        }
        let at = position.min(f.children.len());
        f.children.insert(at, TreeNode::Folder(Folder::new(name)));
        let mut path = parent.to_vec();
        path.push(at);
        Ok(path)
    }

    pub fn remove_node(&mut self, path: &[usize]) -> Result<TreeNode, ActionError> {
        let (last, parents) = path
            .split_last()
            .ok_or_else(|| ActionError::Validation("cannot remove the root folder".into()))?;
        let f = self.folder_mut(parents)?;
        if *last >= f.children.len() {
            return Err(ActionError::NotFound(alloc::format!("node at {path:?}")));
        }
        Ok(f.children.remove(*last))
    }

    /// Moves a node into `dest` at final index `position` (clamped).
    ///
    /// `dest` is given in the coordinates of the tree before the move. Moving
    /// a folder into itself or one of its descendants fails with
    /// [`ActionError::Cycle`].
    pub fn move_node(&mut self, node: &[usize], dest: &[usize], position: usize) -> Result<NodePath, ActionError> {
        let moving = self
            .node(node)
            .ok_or_else(|| ActionError::NotFound(alloc::format!("node at {node:?}")))?;
        let dest_folder = self
            .folder(dest)
            .ok_or_else(|| ActionError::NotFound(alloc::format!("folder at {dest:?}")))?;
        if let TreeNode::Folder(f) = moving {
            if dest.starts_with(node) {
                return Err(ActionError::Cycle);
            }
            let (_, src_parent) = node.split_last().unwrap_or((&0, &[]));
            if src_parent != dest && dest_folder.has_child_folder(&f.name) {
                return Err(ActionError::Duplicate(f.name.clone()));
            }
        }

        // Removing the node shifts later siblings, possibly including an
        // ancestor of `dest`.
        let mut dest = dest.to_vec();
        let (src_idx, src_parent) = node.split_last().unwrap_or((&0, &[]));
        let depth = src_parent.len();
        if dest.len() > depth && dest[..depth] == *src_parent && dest[depth] > *src_idx {
            dest[depth] -= 1;
        }

        let taken = self.remove_node(node)?;
        let f = self.folder_mut(&dest)?;
        let at = position.min(f.children.len());
        f.children.insert(at, taken);
        dest.push(at);
        Ok(dest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::action::{ActionKind, ActionSpec, CallStyle, Payload};
    use alloc::vec;
    use proptest::prelude::*;
    use serde_json::json;

    fn registry(names: &[&str]) -> ActionRegistry {
        let mut r = ActionRegistry::new();
        for n in names {
            r.register(ActionSpec::new(
                n,
                n,
                ActionKind::Message {
                    channel: "robot/x".into(),
                    call_style: CallStyle::Publish,
                    payload: Payload::Static(json!(null)),
                },
            ))
            .unwrap();
        }
        r
    }

    fn sample() -> (ActionRegistry, ActionTree) {
        let reg = registry(&["Unfold Arm", "Drive", "Toggle LED"]);
        let mut t = ActionTree::new();
        t.add_folder(&[], 0, "Manipulation").unwrap();
        t.add_folder(&[], 1, "Driving").unwrap();
        t.insert_action(&reg, &[1], 0, "Drive".into()).unwrap();
        t.insert_action(&reg, &[], 9, "Unfold Arm".into()).unwrap();
        t.insert_action(&reg, &[0], 0, "Toggle LED".into()).unwrap();
        (reg, t)
    }

    #[test]
    fn move_into_folder_at_front() {
        let (reg, mut t) = sample();
        let arm = [2];
        assert_eq!(t.node(&arm), Some(&TreeNode::Action("Unfold Arm".into())));
        let manip = t.find_folder(&["Manipulation"]).unwrap();
        let at = t.move_node(&arm, &manip, 0).unwrap();
        assert_eq!(at, vec![0, 0]);
        assert_eq!(
            t.folder(&manip).unwrap().children[0],
            TreeNode::Action("Unfold Arm".into())
        );
        t.validate(&reg).unwrap();
    }

    #[test]
    fn same_action_in_two_folders() {
        let (reg, mut t) = sample();
        t.insert_action(&reg, &[1], 5, "Unfold Arm".into()).unwrap();
        let refs: Vec<_> = t
            .references()
            .into_iter()
            .filter(|r| r.as_str() == "Unfold Arm")
            .collect();
        assert_eq!(refs.len(), 2);
        for r in refs {
            assert_eq!(reg.get(r).unwrap().display_name, "Unfold Arm");
        }
        assert_eq!(reg.len(), 3);
    }

    #[test]
    fn folder_into_own_descendant_is_cycle() {
        let (_, mut t) = sample();
        let b = t.add_folder(&[0], 0, "B").unwrap();
        assert_eq!(t.move_node(&[0], &b, 0), Err(ActionError::Cycle));
        assert_eq!(t.move_node(&[0], &[0], 0), Err(ActionError::Cycle));
    }

    #[test]
    fn earlier_sibling_removal_shifts_destination() {
        let (_, mut t) = sample();
        // move "Manipulation" (index 0) into "Driving" (index 1 before the move)
        let at = t.move_node(&[0], &[1], 0).unwrap();
        assert_eq!(at, vec![0, 0]);
        assert_eq!(t.folder(&[0]).unwrap().name, "Driving");
        assert_eq!(t.folder(&[0, 0]).unwrap().name, "Manipulation");
    }

    #[test]
    fn unknown_reference_rejected() {
        let (reg, mut t) = sample();
        assert!(matches!(
            t.insert_action(&reg, &[], 0, "Ghost".into()),
            Err(ActionError::NotFound(_))
        ));
        assert!(matches!(
            t.add_folder(&[], 0, "Driving"),
            Err(ActionError::Duplicate(_))
        ));
    }

    #[test]
    fn json_shape() {
        let (_, t) = sample();
        let v = serde_json::to_value(&t).unwrap();
        assert_eq!(v["children"][0]["folder"]["name"], "Manipulation");
        assert_eq!(v["children"][2]["action"], "Unfold Arm");
        let back: ActionTree = serde_json::from_value(v).unwrap();
        assert_eq!(back, t);
    }

    fn all_paths(t: &ActionTree) -> Vec<NodePath> {
        fn walk(f: &Folder, prefix: &mut Vec<usize>, out: &mut Vec<NodePath>) {
            for (i, c) in f.children.iter().enumerate() {
                prefix.push(i);
                out.push(prefix.clone());
                if let TreeNode::Folder(sub) = c {
                    walk(sub, prefix, out);
                }
                prefix.pop();
            }
        }
        let mut out = Vec::new();
        walk(&t.root, &mut Vec::new(), &mut out);
        out
    }

    fn folder_paths(t: &ActionTree) -> Vec<NodePath> {
        let mut v: Vec<NodePath> = all_paths(t)
            .into_iter()
            .filter(|p| matches!(t.node(p), Some(TreeNode::Folder(_))))
            .collect();
        v.push(vec![]);
        v
    }

    proptest! {
        #[test]
        fn moves_preserve_reference_multiset(ops in proptest::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>(), 0usize..5), 1..40)) {
            let (reg, mut t) = sample();
            t.add_folder(&[0], 0, "Inner").unwrap();
            let mut before: Vec<String> = t.references().iter().map(|r| r.0.clone()).collect();
            before.sort();
            for (n, d, pos) in ops {
                let nodes = all_paths(&t);
                let dests = folder_paths(&t);
                let node = n.get(&nodes).clone();
                let dest = d.get(&dests).clone();
                let _ = t.move_node(&node, &dest, pos);
                t.validate(&reg).unwrap();
            }
            let mut after: Vec<String> = t.references().iter().map(|r| r.0.clone()).collect();
            after.sort();
            prop_assert_eq!(before, after);
            prop_assert_eq!(reg.len(), 3);
        }
    }
}
