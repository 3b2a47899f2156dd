use crate::error::{Error, Result};

/// Connectivity policy: which earlier layers' feature maps are pooled into
/// the input of the layer currently being trained or evaluated.
pub trait ReuseStrategy: Send + Sync {
    fn name(&self) -> &'static str;

    /// 1-based indices of the carried feature maps consumed by layer
    /// `layer_index`. The carry holds layers 1..=layer_index at call time,
    /// and the returned list is strictly increasing and always ends with
    /// `layer_index` itself.
    fn selected_layers(&self, layer_index: usize) -> Vec<usize>;
}

struct NoReuse;

impl ReuseStrategy for NoReuse {
    fn name(&self) -> &'static str {
        "none"
    }

    fn selected_layers(&self, layer_index: usize) -> Vec<usize> {
        vec![layer_index]
    }
}

struct PreviousOnly;

impl ReuseStrategy for PreviousOnly {
    fn name(&self) -> &'static str {
        "previous_only"
    }

    fn selected_layers(&self, layer_index: usize) -> Vec<usize> {
        if layer_index > 1 {
            vec![layer_index - 1, layer_index]
        } else {
            vec![1]
        }
    }
}

struct Dense;

impl ReuseStrategy for Dense {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn selected_layers(&self, layer_index: usize) -> Vec<usize> {
        (1..=layer_index).collect()
    }
}

static REGISTRY: [&dyn ReuseStrategy; 3] = [&NoReuse, &PreviousOnly, &Dense];

/// Look a strategy up by its registered name.
pub fn reuse_strategy(name: &str) -> Result<&'static dyn ReuseStrategy> {
    REGISTRY
        .iter()
        .find(|s| s.name() == name)
        .copied()
        .ok_or_else(|| {
            Error::invalid_argument(format!(
                "unknown reuse mode '{name}' (expected one of: {})",
                reuse_names().join(", ")
            ))
        })
}

pub fn reuse_names() -> Vec<&'static str> {
    REGISTRY.iter().map(|s| s.name()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registry_resolves_every_listed_name() {
        for name in reuse_names() {
            assert_eq!(reuse_strategy(name).unwrap().name(), name);
        }
        assert_eq!(reuse_names(), vec!["none", "previous_only", "dense"]);
    }

    #[test]
    fn unknown_name_is_rejected_with_choices() {
        let err = reuse_strategy("all").err().unwrap();
        assert!(err.to_string().contains("previous_only"));
    }

    #[test]
    fn selections_follow_their_connectivity() {
        let none = reuse_strategy("none").unwrap();
        let prev = reuse_strategy("previous_only").unwrap();
        let dense = reuse_strategy("dense").unwrap();
        for layer in 1..=4 {
            assert_eq!(none.selected_layers(layer), vec![layer]);
            assert_eq!(dense.selected_layers(layer), (1..=layer).collect::<Vec<_>>());
            assert_eq!(*dense.selected_layers(layer).last().unwrap(), layer);
        }
        assert_eq!(prev.selected_layers(1), vec![1]);
        assert_eq!(prev.selected_layers(2), vec![1, 2]);
        assert_eq!(prev.selected_layers(4), vec![3, 4]);
    }

    #[test]
    fn all_modes_agree_at_the_first_layer() {
        for name in reuse_names() {
            assert_eq!(reuse_strategy(name).unwrap().selected_layers(1), vec![1]);
        }
    }
}
