"""
Run records: one JSON file per CLI invocation
"""
import json
from datetime import datetime
from pathlib import Path
from typing import Any, Dict, Optional


class RunLogger:
    """Persists the resolved configuration and outcome of each run"""

    def __init__(self, logs_dir: str = "logs"):
        self.logs_dir = Path(logs_dir)
        self.logs_dir.mkdir(parents=True, exist_ok=True)

    def log_run(
        self,
        command: str,
        config: Dict[str, Any],
        result: Optional[Dict[str, Any]] = None,
        error: Optional[str] = None
    ) -> Path:
        """
        Save one run record

        Args:
            command: Subcommand name (train, eval, ...)
            config: Fully resolved configuration, defaults included
            result: Summary of what the run produced
            error: Error text if the run failed

        Returns:
            Path of the written record
        """
        now = datetime.now()
        date_str = now.strftime("%Y-%m-%d")
        timestamp = now.strftime("%Y-%m-%d_%H-%M-%S-%f")

        command_dir = self.logs_dir / date_str / command
        command_dir.mkdir(parents=True, exist_ok=True)

        record = {
            "timestamp": now.isoformat(),
            "command": command,
            "config": config,
            "result": result or {},
            "error": error
        }

        log_file = command_dir / f"{timestamp}.json"
        with open(log_file, 'w', encoding='utf-8') as f:
            json.dump(record, f, ensure_ascii=False, indent=2, default=str)

        return log_file

    def get_runs(self, command: str, date: Optional[str] = None) -> list:
        """
        Records of one command for a date

        Args:
            command: Subcommand name
            date: YYYY-MM-DD (today when None)
        """
        if date is None:
            date = datetime.now().strftime("%Y-%m-%d")

        command_dir = self.logs_dir / date / command
        if not command_dir.exists():
            return []

        runs = []
        for log_file in sorted(command_dir.glob("*.json")):
            with open(log_file, 'r', encoding='utf-8') as f:
                runs.append(json.load(f))

        return runs

    def get_all_dates(self) -> list:
        """Dates that have run records"""
        return sorted([d.name for d in self.logs_dir.iterdir() if d.is_dir()])

    def get_commands_for_date(self, date: str) -> list:
        """Commands that ran on a date"""
        date_dir = self.logs_dir / date
        if not date_dir.exists():
            return []

        return sorted([d.name for d in date_dir.iterdir() if d.is_dir()])
