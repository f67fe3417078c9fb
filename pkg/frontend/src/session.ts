/**
 * Session loop: fetch the server's next unanswered case, collect one
 * decision, submit, advance only after the acknowledgment.
 *
 * The order is server-authoritative; the client re-asks for the session
 * every step, which also makes reloads resume at the first unanswered
 * case for free. A 409 conflict (answer already recorded, e.g. a second
 * tab) skips forward the same way. Network failures keep the pending
 * answer and surface a retry prompt; nothing is persisted client-side.
 */

import { ApiError, StudyApi } from "./api.js";
import type { CasePayload, SessionState } from "./api.js";
import { CaseView } from "./view.js";
import type { Submission } from "./view.js";

export interface RunnerOptions {
  reader: string;
  round: number;
  seed: number;
  tier: string;
  /** Hook for scripted runs: called after each case renders. */
  onCaseRendered?: (payload: CasePayload, view: CaseView) => void;
}

export class SessionRunner {
  constructor(
    private readonly api: StudyApi,
    private readonly view: CaseView,
    private readonly opts: RunnerOptions,
  ) {}

  private awaitSubmission(payload: CasePayload, state: SessionState): Promise<Submission> {
    return new Promise((resolve) => {
      this.view.renderCase(
        payload,
        state.progress,
        this.opts.round,
        this.api.imageUrl(payload.image_ref),
        resolve,
      );
      this.opts.onCaseRendered?.(payload, this.view);
    });
  }

  private awaitRetry(message: string): Promise<void> {
    return new Promise((resolve) => this.view.showRetry(message, resolve));
  }

  /** Drive the round to completion; resolves with the final session state. */
  async run(): Promise<SessionState> {
    for (;;) {
      const state = await this.api.getSession(
        this.opts.reader,
        this.opts.round,
        this.opts.seed,
        this.opts.tier,
      );
      const payload = state.next_case;
      if (payload === null) {
        this.view.showDone(state.progress, this.opts.round);
        return state;
      }
      const submission = await this.awaitSubmission(payload, state);
      const body = {
        reader: this.opts.reader,
        case_id: payload.case_id,
        round: this.opts.round,
        label: submission.label,
        confidence: submission.confidence,
      };
      // retry the same answer until the server acknowledges or reports
      // a conflict (already answered: skip forward to the next case)
      for (;;) {
        try {
          await this.api.submitResponse(body);
          break;
        } catch (err) {
          if (err instanceof ApiError) {
            if (err.isConflict) {
              this.view.showNotice(`Case ${payload.case_id} was already answered; skipping.`);
              break;
            }
            throw err; // validation/protocol errors are programming bugs
          }
          await this.awaitRetry(err instanceof Error ? err.message : String(err));
        }
      }
    }
  }
}
