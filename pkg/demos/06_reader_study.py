"""The two-round reading study end to end: blind round, assisted round,
and the scoring report with the ranking/modification correlation."""

import tempfile
from pathlib import Path

from evalign.study import StudyCase, StudyService, top_ranking_score

OPTIONS = tuple(f"disease_{i}" for i in range(8))


def case_with_truth_at_rank(cid, truth, rank):
    others = [o for o in OPTIONS if o != truth]
    top5 = others[:5] if rank == 0 else others[: rank - 1] + [truth] + others[rank - 1 : 4]
    return StudyCase(
        case_id=cid, image_ref=f"/image/{cid}", options=OPTIONS, truth=truth, top5=tuple(top5[:5])
    )


# Six cases whose correct answers sit at suggestion ranks 1..5 and absent.
cases = [case_with_truth_at_rank(f"c{i}", OPTIONS[i], r) for i, r in enumerate((1, 2, 3, 4, 5, 0))]
print("top-ranking scores:", [top_ranking_score(c) for c in cases])

with tempfile.TemporaryDirectory() as tmp:
    log = Path(tmp) / "events.jsonl"
    svc = StudyService(cases, log_path=log)

    # Round 1 is blind: payloads never include the model's suggestions.
    s1 = svc.create_session("dr_basu", 1, seed=11, tier="senior")
    print("round-1 payload keys:", sorted(svc.next_case_payload(s1)))

    # The reader gets cases c0 and c4 right unaided.
    for cid in s1.order:
        truth = svc.cases[cid].truth
        answer = truth if cid in ("c0", "c4") else OPTIONS[(OPTIONS.index(truth) + 1) % 8]
        svc.submit_response("dr_basu", cid, 1, answer, confidence=2)

    # Round 2 shows the top-5; the reader follows strong suggestions and
    # keeps earlier answers where the model is silent.
    s2 = svc.create_session("dr_basu", 2, seed=11, tier="senior")
    print("round-2 payload keys:", sorted(svc.next_case_payload(s2)))
    for cid in s2.order:
        case = svc.cases[cid]
        rank_score = top_ranking_score(case)
        if rank_score >= 3:  # suggestion ranked 1-3: adopt it
            answer = case.top5[[5, 4, 3].index(rank_score)] if case.truth in case.top5 else case.top5[0]
        elif cid == "c4":
            answer = OPTIONS[(OPTIONS.index(case.truth) + 2) % 8]  # talked out of a correct answer
        else:
            answer = case.truth if cid == "c3" else OPTIONS[(OPTIONS.index(case.truth) + 1) % 8]
        svc.submit_response("dr_basu", cid, 2, answer, confidence=4)

    report = svc.report()
    r = report["per_reader"]["dr_basu"]
    print(f"\naccuracy: round 1 {r['round1_accuracy']:.2f} -> round 2 {r['round2_accuracy']:.2f}")
    print("per-case (top-ranking score, summed modification):")
    for cid, row in report["per_case"].items():
        print(f"  {cid}: ({row['top_ranking_score']}, {row['modification_score_sum']:+d})")
    print("pearson(top-ranking, modification):", report["pearson_top_ranking_vs_modification"])
    print("changed answers:", report["changed_answers"])

    # Event sourcing: replaying the log reproduces the report exactly.
    replay = StudyService(cases, log_path=log)
    print("replay reproduces report:", replay.report_json() == svc.report_json())
