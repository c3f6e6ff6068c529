//! Spike raster emission: one `neuron_index,time_step` line per spike of a
//! chosen layer, for plotting firing patterns outside the tool.

use crate::error::{Error, Result};
use crate::forward::Trace;

/// Renders the raster for `layer` of a trace. Pool layers count any nonzero
/// (fractional) output as a mark.
pub fn raster_lines(trace: &Trace, layer: usize, config_hash: &str) -> Result<String> {
    let Some(lt) = trace.layers.get(layer) else {
        return Err(Error::Config(format!(
            "layer {layer} out of range; trace has {} layers",
            trace.layers.len()
        )));
    };
    let mut out = format!("# config {config_hash}\n");
    for t in 0..trace.steps {
        for (i, &o) in lt.o_at(t).iter().enumerate() {
            if o != 0.0 {
                out.push_str(&format!("{i},{t}\n"));
            }
        }
    }
    Ok(out)
}

/// Spike counts per neuron for a layer, the quantity rasters visualize.
pub fn spike_counts(trace: &Trace, layer: usize) -> Result<Vec<f64>> {
    let Some(lt) = trace.layers.get(layer) else {
        return Err(Error::Config(format!(
            "layer {layer} out of range; trace has {} layers",
            trace.layers.len()
        )));
    };
    let mut counts = vec![0.0; lt.width];
    for t in 0..trace.steps {
        for (c, &o) in counts.iter_mut().zip(lt.o_at(t)) {
            *c += o;
        }
    }
    Ok(counts)
}
