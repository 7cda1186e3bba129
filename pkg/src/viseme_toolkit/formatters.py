from typing import Dict, List, Mapping, Sequence, Tuple

from .models import (
    CorrelationResult,
    DeclinePoint,
    FeatureComparison,
    FoldStatistics,
    RankingResult,
    ScoreReport,
    VisemeProbability,
)


def format_probability(value: float) -> str:
    """Four decimals, as the report tables print them"""
    return f"{value:.4f}"


def format_p_value(value: float) -> str:
    return f"{value:.3g}" if value < 0.001 else f"{value:.4f}"


class ReportFormatter:
    @staticmethod
    def format_counts(counts: Mapping[str, int]) -> str:
        lines = ["viseme,count"]
        for viseme, count in counts.items():
            lines.append(f"{viseme},{count}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_probabilities(probs: Sequence[VisemeProbability]) -> str:
        lines = ["viseme,p,se,n_folds"]
        for item in probs:
            p = "" if item.p is None else format_probability(item.p)
            lines.append(f"{item.viseme},{p},{format_probability(item.se)},{item.n_folds}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_ranking(ranking: RankingResult) -> str:
        lines = ["position,viseme,p,rank,tied"]
        position = 1
        for group in ranking.groups:
            for viseme in group:
                if viseme in ranking.ranks:
                    p = format_probability(ranking.values[viseme])
                    rank = f"{ranking.ranks[viseme]:g}"
                else:
                    p, rank = "", ""
                lines.append(f"{position},{viseme},{p},{rank},{'yes' if len(group) > 1 else 'no'}")
                position += 1
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_ranking_text(ranking: RankingResult) -> str:
        """One-line ranking with ties in braces, e.g. ``/v18/ {/v04/, /v12/} /v01/``"""
        parts = []
        for group in ranking.groups:
            if group == ranking.undefined:
                continue
            names = [f"/{v}/" for v in group]
            parts.append(names[0] if len(names) == 1 else "{" + ", ".join(names) + "}")
        return " ".join(parts)

    @staticmethod
    def format_correlations(table: Mapping[Tuple[str, str], CorrelationResult]) -> str:
        lines = ["a,b,r,p_value,method,t_p_value,n,significant"]
        for (a, b), result in table.items():
            t_p = "" if result.t_p_value is None else format_p_value(result.t_p_value)
            lines.append(
                f"{a},{b},{result.r:.2f},{format_p_value(result.p_value)},{result.method},"
                f"{t_p},{result.n},{'yes' if result.significant else 'no'}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_fold_stats(rows: Sequence[Tuple[str, FoldStatistics]]) -> str:
        lines = ["name,mean,standard_error,n_folds"]
        for name, stats in rows:
            lines.append(f"{name},{stats.mean:.4f},{stats.standard_error:.4f},{stats.n_folds}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_decline(series: Sequence[DeclinePoint]) -> str:
        lines = ["position,viseme,p,se"]
        for point in series:
            p, se = format_probability(point.p), format_probability(point.se)
            lines.append(f"{point.position},{point.viseme},{p},{se}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_decline_dat(series: Sequence[DeclinePoint]) -> str:
        """Plot data: position, probability, standard error"""
        lines = [f"# {' '.join(point.viseme for point in series)}"]
        for point in series:
            lines.append(f"{point.position} {format_probability(point.p)} {format_probability(point.se)}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_comparison_dat(pairs: Sequence[FeatureComparison]) -> str:
        lines = ["# viseme p_a se_a p_b se_b"]
        for item in pairs:
            lines.append(
                f"{item.viseme} {format_probability(item.p_a)} {format_probability(item.se_a)} "
                f"{format_probability(item.p_b)} {format_probability(item.se_b)}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_scores(reports: Sequence[Tuple[int, ScoreReport]]) -> str:
        lines = ["fold,N,H,D,S,I,correctness,accuracy"]
        for fold, report in reports:
            lines.append(
                f"{fold},{report.N},{report.H},{report.D},{report.S},{report.I},"
                f"{report.correctness:.4f},{report.accuracy:.4f}"
            )
        return "\n".join(lines) + "\n"

    @staticmethod
    def format_summary(sections: Dict[str, List[str]]) -> str:
        content = []
        for title, body in sections.items():
            content.append(f"[{title}]")
            content.extend(body)
            content.append("")
        return "\n".join(content)
