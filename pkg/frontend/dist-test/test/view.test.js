/** View behavior against the DOM stub: gating, blinding, confidence set. */
import assert from "node:assert/strict";
import { test } from "node:test";
import { CaseView, CONFIDENCE_LEVELS } from "../src/view.js";
import { StubDocument, asDocument, asRoot } from "./domstub.js";
const OPTIONS = ["d0", "d1", "d2", "d3", "d4", "d5"];
function makeView() {
    const doc = new StubDocument();
    const root = doc.createElement("div");
    return { view: new CaseView(asRoot(root), asDocument(doc)), root };
}
function render(view, payload, onSubmit = () => { }) {
    view.renderCase({
        case_id: "c0",
        image_ref: "/image/c0",
        options: OPTIONS,
        ...payload,
    }, { answered: 0, total: 6 }, payload.top5 ? 2 : 1, "/image/c0", onSubmit);
}
test("submit stays disabled until both label and confidence are chosen", () => {
    const { view } = makeView();
    const got = [];
    render(view, {}, (s) => got.push(s));
    const submit = view.submitButton;
    assert.equal(submit.disabled, true);
    submit.click();
    assert.equal(got.length, 0, "disabled submit must not fire");
    view.optionInputs.get("d2").click();
    assert.equal(submit.disabled, true, "label alone is not enough");
    view.confidenceButtons.get(4).click();
    assert.equal(submit.disabled, false);
    submit.click();
    assert.deepEqual(got, [{ label: "d2", confidence: 4 }]);
});
test("round-1 payloads render no suggestion block", () => {
    const { view, root } = makeView();
    render(view, {});
    assert.equal(view.suggestionItems.length, 0);
    assert.equal(root.byClass("suggestions").length, 0);
});
test("round-2 payloads render exactly the five ranked suggestions", () => {
    const { view, root } = makeView();
    render(view, { top5: ["d3", "d1", "d0", "d5", "d2"] });
    assert.equal(view.suggestionItems.length, 5);
    assert.deepEqual(root.byClass("suggestion").map((el) => el.textContent), ["d3", "d1", "d0", "d5", "d2"]);
});
test("confidence control offers exactly the integers 1..5", () => {
    const { view, root } = makeView();
    render(view, {});
    assert.deepEqual([...view.confidenceButtons.keys()], [1, 2, 3, 4, 5]);
    assert.deepEqual([...CONFIDENCE_LEVELS], [1, 2, 3, 4, 5]);
    assert.deepEqual(root.byClass("confidence-level").map((el) => el.textContent), ["1", "2", "3", "4", "5"]);
});
test("retry prompt keeps the pending answer and resumes on click", () => {
    const { view, root } = makeView();
    render(view, {});
    let retried = 0;
    view.showRetry("connection refused", () => {
        retried += 1;
    });
    const buttons = root.byClass("retry-button");
    assert.equal(buttons.length, 1);
    buttons[0].click();
    assert.equal(retried, 1);
    assert.equal(root.byClass("retry").length, 0, "prompt clears after retry");
});
