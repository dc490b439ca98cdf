from dataclasses import dataclass, field

ERROR = "error"
WARNING = "warning"


@dataclass(frozen=True)
class Finding:
    severity: str
    path: str
    message: str

    def __str__(self):
        return f"{self.severity}: {self.path}: {self.message}"

    def to_dict(self):
        return {"severity": self.severity, "path": self.path, "message": self.message}


@dataclass
class ValidationReport:
    findings: list = field(default_factory=list)

    def error(self, path, message):
        self.findings.append(Finding(ERROR, path, message))

    def warning(self, path, message):
        self.findings.append(Finding(WARNING, path, message))

    def extend(self, other):
        self.findings.extend(other.findings)
        return self

    @property
    def errors(self):
        return [f for f in self.findings if f.severity == ERROR]

    @property
    def warnings(self):
        return [f for f in self.findings if f.severity == WARNING]

    @property
    def ok(self):
        return not self.errors

    def __len__(self):
        return len(self.findings)

    def __iter__(self):
        return iter(self.findings)

    def to_dict(self):
        return {
            "ok": self.ok,
            "errors": len(self.errors),
            "warnings": len(self.warnings),
            "findings": [f.to_dict() for f in self.findings],
        }
