use log::warn;

use crate::data::LabeledDataset;

/// Splits off every sample of class `y_u`; returns `(remaining, removed)`.
pub fn delete_class(dataset: &LabeledDataset, y_u: usize) -> (LabeledDataset, LabeledDataset) {
    let remaining = dataset.filter(|y| y != y_u);
    let removed = dataset.of_class(y_u);
    if remaining.is_empty() && !removed.is_empty() {
        warn!("holder keeps no data after deleting class {y_u}");
    }
    (remaining, removed)
}
