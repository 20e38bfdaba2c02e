//! Randomized commit/branch/restart sequences against a reference model of
//! the version tree.

use std::collections::{HashMap, HashSet};

use fediff_core::store::{CreatedBy, SessionStore, StoreError};
use fediff_core::ContentDigest;
use proptest::prelude::*;

#[derive(Debug, Clone)]
enum Op {
    /// Commit under the n-th existing node (mod count), or a parentless commit.
    Commit(Option<usize>),
    /// Commit under a label that does not exist.
    CommitOrphan,
    Branch(usize),
    BranchMissing,
    Restart,
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        6 => prop::option::weighted(0.9, 0usize..64).prop_map(Op::Commit),
        1 => Just(Op::CommitOrphan),
        2 => (0usize..64).prop_map(Op::Branch),
        1 => Just(Op::BranchMissing),
        1 => Just(Op::Restart),
    ]
}

/// Check the stored tree against the model and its structural invariants.
fn check(store: &SessionStore, id: &fediff_core::store::SessionId, model: &[Option<String>], digests: &HashMap<String, ContentDigest>) {
    let nodes = store.nodes(id).unwrap();
    assert_eq!(nodes.len(), model.len());
    let labels: HashSet<&str> = nodes.iter().map(|n| n.label.as_str()).collect();
    assert_eq!(labels.len(), nodes.len(), "labels unique");
    let roots: Vec<_> = nodes.iter().filter(|n| n.parent.is_none()).collect();
    if !nodes.is_empty() {
        assert_eq!(roots.len(), 1, "single root");
        assert_eq!(roots[0].created_by, CreatedBy::CodeAgent);
        assert_eq!(roots[0].label, "v0");
    }
    for (i, node) in nodes.iter().enumerate() {
        assert_eq!(node.label, format!("v{i}"), "creation order");
        assert_eq!(node.parent, model[i]);
        if let Some(p) = &node.parent {
            assert!(labels.contains(p.as_str()), "parent exists");
        }
        // Acyclic: walking parents reaches the root within n steps.
        let path = store.path_to(id, &node.label).unwrap();
        assert_eq!(path.first().map(String::as_str), Some("v0"));
        assert!(path.len() <= nodes.len());
        // Immutable: digest unchanged since commit and still verifiable.
        assert_eq!(&node.artifact_digest, &digests[&node.label]);
        assert_eq!(store.artifact(id, &node.label).unwrap().byte_digest(), &digests[&node.label]);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 96, ..ProptestConfig::default() })]

    #[test]
    fn tree_stays_single_rooted_and_acyclic(ops in prop::collection::vec(op(), 1..40)) {
        let dir = tempfile::tempdir().unwrap();
        let mut store = SessionStore::open(dir.path()).unwrap();
        let id = store.create_session("p", ContentDigest::of(b"s")).unwrap().id;
        let mut model: Vec<Option<String>> = Vec::new();
        let mut head: Option<String> = None;
        let mut digests: HashMap<String, ContentDigest> = HashMap::new();

        for (step, op) in ops.into_iter().enumerate() {
            let html = format!("<!DOCTYPE html><html><body>{step}</body></html>");
            match op {
                Op::Commit(choice) => {
                    let parent = match (choice, model.len()) {
                        (Some(i), n) if n > 0 => Some(format!("v{}", i % n)),
                        _ => None,
                    };
                    let by = if parent.is_some() { CreatedBy::CriticAgent } else { CreatedBy::CodeAgent };
                    let result = store.commit_version(&id, parent.as_deref(), &html, by, None);
                    if parent.is_none() && !model.is_empty() {
                        prop_assert_eq!(result, Err(StoreError::RootAlreadyExists));
                    } else {
                        let node = result.unwrap();
                        prop_assert_eq!(&node.label, &format!("v{}", model.len()));
                        digests.insert(node.label.clone(), ContentDigest::of(html.as_bytes()));
                        model.push(parent);
                        head = Some(node.label);
                    }
                }
                Op::CommitOrphan => {
                    let missing = format!("v{}", model.len() + 5);
                    let result = store.commit_version(&id, Some(&missing), &html, CreatedBy::CriticAgent, None);
                    prop_assert_eq!(result, Err(StoreError::UnknownParent(missing)));
                }
                Op::Branch(i) if !model.is_empty() => {
                    let label = format!("v{}", i % model.len());
                    store.branch_from(&id, &label).unwrap();
                    head = Some(label);
                }
                Op::Branch(_) | Op::BranchMissing => {
                    let missing = format!("v{}", model.len());
                    prop_assert_eq!(store.branch_from(&id, &missing), Err(StoreError::UnknownVersion(missing.clone())));
                }
                Op::Restart => {
                    let before = store.list_versions(&id).unwrap();
                    drop(store);
                    store = SessionStore::open(dir.path()).unwrap();
                    prop_assert_eq!(store.list_versions(&id).unwrap(), before);
                }
            }
            prop_assert_eq!(store.session(&id).unwrap().active_head, head.clone());
            check(&store, &id, &model, &digests);
        }
    }
}

#[test]
fn branching_from_an_inner_node_forks_the_tree() {
    let dir = tempfile::tempdir().unwrap();
    let store = SessionStore::open(dir.path()).unwrap();
    let id = store.create_session("p", ContentDigest::of(b"s")).unwrap().id;
    store.commit_version(&id, None, "0", CreatedBy::CodeAgent, None).unwrap();
    store.commit_version(&id, Some("v0"), "1", CreatedBy::CriticAgent, None).unwrap();
    store.commit_version(&id, Some("v1"), "2", CreatedBy::CriticAgent, None).unwrap();
    store.branch_from(&id, "v1").unwrap();
    let head = store.session(&id).unwrap().active_head.unwrap();
    store.commit_version(&id, Some(&head), "3", CreatedBy::CriticAgent, None).unwrap();
    let versions = store.list_versions(&id).unwrap();
    let mut out_degree: HashMap<String, usize> = HashMap::new();
    for v in &versions {
        if let Some(p) = &v.node.parent {
            *out_degree.entry(p.clone()).or_default() += 1;
        }
    }
    assert_eq!(out_degree.get("v1"), Some(&2));
    assert_eq!(store.path_to(&id, "v3").unwrap(), ["v0", "v1", "v3"]);
}
