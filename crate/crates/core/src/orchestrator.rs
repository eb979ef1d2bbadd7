pub struct MetricsAccumulator;
pub struct MetricsReport;
pub struct RunOutput;
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize, Default)]
pub enum StrategyKind {
    #[default]
    Tjcct,
}
