from .xqc.xqc import agent
