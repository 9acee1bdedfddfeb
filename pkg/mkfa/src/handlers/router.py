"""Subcommand registry"""
import argparse
from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional

from ..utils.config import Config

Handler = Callable[[argparse.Namespace, Config], Optional[Dict[str, Any]]]
Arguments = Callable[[argparse.ArgumentParser, Config], None]


@dataclass
class Route:
    name: str
    help: str
    handler: Handler
    arguments: Optional[Arguments] = None


class Router:
    """Collects handlers registered with `@router.command(...)`, in registration order"""

    def __init__(self):
        self.routes: Dict[str, Route] = {}

    def command(self, name: str, help: str, arguments: Optional[Arguments] = None):
        def decorator(handler: Handler) -> Handler:
            if name in self.routes:
                raise ValueError(f"command '{name}' registered twice")
            self.routes[name] = Route(name, help, handler, arguments)
            return handler
        return decorator

    def include_router(self, other: "Router") -> None:
        for name, route in other.routes.items():
            if name in self.routes:
                raise ValueError(f"command '{name}' registered twice")
            self.routes[name] = route
