"""市场模拟器异常定义

全部继承 ValueError，调用方可以统一捕获 MarketError。
"""


class MarketError(ValueError):
    """市场模拟器异常基类"""


class InvalidArgumentError(MarketError):
    """操作参数不合法（负带宽、天线数为 0 等）"""


class ConfigurationError(MarketError):
    """配置不合法，或配置导致时钟阶段无法终止"""


class InstanceTooLargeError(MarketError):
    """穷举求解的实例规模超过上限"""


class ConsistencyError(MarketError):
    """结果与其来源轮次不一致"""


class SweepCellError(MarketError):
    """参数扫描中某个单元格失败，消息中包含单元格坐标"""


class OutputError(MarketError):
    """结果文件写入失败，消息中包含路径"""
