use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use super::{ConvLayer, LayerKind, Padding, Precision, TensorDims};
use crate::{Error, Result};

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    precision: Precision,
    layers: Vec<LayerFile>,
    #[serde(default)]
    edges: Vec<[String; 2]>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerFile {
    id: String,
    kind: LayerKind,
    ifm: [u64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    filter: Option<[u64; 2]>,
    #[serde(default = "one")]
    strides: u64,
    out_depth: u64,
    #[serde(default = "same")]
    padding: Padding,
    /// Per-layer override of the model-wide precision.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    precision: Option<Precision>,
}

fn one() -> u64 {
    1
}

fn same() -> Padding {
    Padding::Same
}

/// A validated DAG of convolution layers.
#[derive(Debug, Clone)]
pub struct ModelGraph {
    precision: Precision,
    layers: Vec<ConvLayer>,
    edges: Vec<(String, String)>,
    index: HashMap<String, usize>,
    consumers: Vec<Vec<usize>>,
    producers: Vec<Vec<usize>>,
    topo: Vec<usize>,
}

impl PartialEq for ModelGraph {
    fn eq(&self, other: &Self) -> bool {
        self.precision == other.precision
            && self.layers == other.layers
            && self.edges == other.edges
    }
}

/// Parses and validates a model document.
pub fn parse_model(text: &str) -> Result<ModelGraph> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    let layers = file
        .layers
        .into_iter()
        .map(|l| {
            let [fh, fw] = l.filter.unwrap_or([1, 1]);
            ConvLayer {
                id: l.id,
                kind: l.kind,
                ifm: TensorDims::from(l.ifm),
                filter_h: fh,
                filter_w: fw,
                strides: l.strides,
                out_depth: l.out_depth,
                precision: l.precision.unwrap_or(file.precision),
                padding: l.padding,
            }
        })
        .collect();
    let edges = file.edges.into_iter().map(|[a, b]| (a, b)).collect();
    ModelGraph::new(file.precision, layers, edges)
}

impl ModelGraph {
    pub fn new(
        precision: Precision,
        layers: Vec<ConvLayer>,
        edges: Vec<(String, String)>,
    ) -> Result<Self> {
        let mut index = HashMap::with_capacity(layers.len());
        for (i, layer) in layers.iter().enumerate() {
            layer.validate()?;
            if index.insert(layer.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(layer.id.clone()));
            }
        }

        let n = layers.len();
        let mut consumers = vec![Vec::new(); n];
        let mut producers = vec![Vec::new(); n];
        let mut seen = BTreeSet::new();
        for (p, c) in &edges {
            let lookup = |id: &String| {
                index.get(id).copied().ok_or_else(|| Error::UnknownLayer {
                    producer: p.clone(),
                    consumer: c.clone(),
                    missing: id.clone(),
                })
            };
            let (pi, ci) = (lookup(p)?, lookup(c)?);
            if !seen.insert((pi, ci)) {
                return Err(Error::Schema(format!("duplicate edge {p} -> {c}")));
            }
            let produced = layers[pi].ofm();
            if produced != layers[ci].ifm {
                return Err(Error::ShapeMismatch {
                    producer: p.clone(),
                    consumer: c.clone(),
                    produced: produced.to_string(),
                    expected: layers[ci].ifm.to_string(),
                });
            }
            consumers[pi].push(ci);
            producers[ci].push(pi);
        }

        // Kahn's algorithm, smallest declaration index first.
        let mut indegree: Vec<usize> = producers.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..n).filter(|&i| indegree[i] == 0).collect();
        let mut topo = Vec::with_capacity(n);
        while let Some(i) = ready.pop_first() {
            topo.push(i);
            for &c in &consumers[i] {
                indegree[c] -= 1;
                if indegree[c] == 0 {
                    ready.insert(c);
                }
            }
        }
        if topo.len() != n {
            let stuck = (0..n).find(|&i| indegree[i] > 0).unwrap();
            return Err(Error::Cycle(layers[stuck].id.clone()));
        }

        Ok(ModelGraph {
            precision,
            layers,
            edges,
            index,
            consumers,
            producers,
            topo,
        })
    }

    /// Builds a linear chain, connecting each layer to the next.
    pub fn chain(precision: Precision, layers: Vec<ConvLayer>) -> Result<Self> {
        let edges = layers
            .windows(2)
            .map(|w| (w[0].id.clone(), w[1].id.clone()))
            .collect();
        ModelGraph::new(precision, layers, edges)
    }

    pub fn precision(&self) -> Precision {
        self.precision
    }

    pub fn layers(&self) -> &[ConvLayer] {
        &self.layers
    }

    pub fn edges(&self) -> &[(String, String)] {
        &self.edges
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn layer(&self, id: &str) -> Option<&ConvLayer> {
        self.index.get(id).map(|&i| &self.layers[i])
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn consumers(&self, i: usize) -> &[usize] {
        &self.consumers[i]
    }

    pub fn producers(&self, i: usize) -> &[usize] {
        &self.producers[i]
    }

    /// Layer indices in topological order (ties broken by declaration order).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo
    }

    /// Returns a copy with every layer set to `precision`.
    pub fn with_precision(&self, precision: Precision) -> ModelGraph {
        let mut g = self.clone();
        g.precision = precision;
        for l in &mut g.layers {
            l.precision = precision;
        }
        g
    }

    /// Serializes back into the model document format.
    pub fn to_json(&self) -> String {
        let file = ModelFile {
            precision: self.precision,
            layers: self
                .layers
                .iter()
                .map(|l| LayerFile {
                    id: l.id.clone(),
                    kind: l.kind,
                    ifm: l.ifm.into(),
                    filter: Some([l.filter_h, l.filter_w]),
                    strides: l.strides,
                    out_depth: l.out_depth,
                    padding: l.padding,
                    precision: (l.precision != self.precision).then_some(l.precision),
                })
                .collect(),
            edges: self
                .edges
                .iter()
                .map(|(a, b)| [a.clone(), b.clone()])
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("model serialization")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DSC: &str = r#"{
        "precision": "fp32",
        "layers": [
            {"id": "dw1", "kind": "dw", "ifm": [112,112,32], "filter": [3,3], "strides": 1, "out_depth": 32, "padding": "same"},
            {"id": "pw1", "kind": "pw", "ifm": [112,112,32], "strides": 1, "out_depth": 64, "padding": "same"}
        ],
        "edges": [["dw1", "pw1"]]
    }"#;

    #[test]
    fn parses_single_pw() {
        let g = parse_model(
            r#"{"precision":"fp32","layers":[{"id":"a","kind":"pw","ifm":[4,4,8],"strides":1,"out_depth":16,"padding":"same"}],"edges":[]}"#,
        )
        .unwrap();
        let l = g.layer("a").unwrap();
        assert_eq!(l.ofm(), TensorDims::new(4, 4, 16));
        assert_eq!(l.weights_elements(), 128);
    }

    #[test]
    fn parses_dsc_block() {
        let g = parse_model(DSC).unwrap();
        assert_eq!(g.len(), 2);
        assert_eq!(g.layer("dw1").unwrap().ofm(), g.layer("pw1").unwrap().ifm);
        assert_eq!(g.topo_order(), &[0, 1]);
    }

    #[test]
    fn shape_mismatch_names_both_layers() {
        let text = DSC.replace(
            "\"ifm\": [112,112,32], \"strides\": 1, \"out_depth\": 64",
            "\"ifm\": [112,112,64], \"strides\": 1, \"out_depth\": 64",
        );
        let err = parse_model(&text).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::ShapeMismatch { .. }), "{msg}");
        assert!(msg.contains("dw1") && msg.contains("pw1"), "{msg}");
    }

    #[test]
    fn rejects_unknown_fields_duplicates_and_cycles() {
        let unknown = DSC.replace(
            "\"padding\": \"same\"}",
            "\"padding\": \"same\", \"dilation\": 2}",
        );
        assert!(matches!(parse_model(&unknown), Err(Error::Schema(_))));

        let dup = DSC.replace("\"id\": \"pw1\"", "\"id\": \"dw1\"");
        assert!(matches!(parse_model(&dup), Err(Error::DuplicateId(_))));

        let cyc = r#"{"precision":"int8","layers":[
            {"id":"a","kind":"pw","ifm":[4,4,8],"out_depth":8},
            {"id":"b","kind":"pw","ifm":[4,4,8],"out_depth":8}],
            "edges":[["a","b"],["b","a"]]}"#;
        assert!(matches!(parse_model(cyc), Err(Error::Cycle(_))));

        let missing = DSC.replace("[\"dw1\", \"pw1\"]", "[\"dw1\", \"nope\"]");
        assert!(matches!(
            parse_model(&missing),
            Err(Error::UnknownLayer { .. })
        ));
    }

    #[test]
    fn round_trip() {
        let g = parse_model(DSC).unwrap();
        let again = parse_model(&g.to_json()).unwrap();
        assert_eq!(g, again);
    }
}
