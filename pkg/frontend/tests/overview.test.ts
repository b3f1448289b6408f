import { describe, expect, it } from "vitest";
import { formatNum } from "../src/format.js";
import { renderOverview } from "../src/render/overview.js";
import { stagePanel } from "../src/render/panels.js";
import { topWeighted } from "../src/render/graph.js";
import type { Stage } from "../src/types.js";
import { ALL_STAGES } from "../src/types.js";
import { ABLATIONS, overviewFixture, panelOf } from "./fixtures.js";

const toggles = (stages: string[]) => new Set(stages as Stage[]);

describe("stage settings render exactly the permitted panels", () => {
  for (const { file, stages } of ABLATIONS) {
    it(`setting ${stages.join("+")}`, () => {
      const bundle = overviewFixture(file);
      const html = renderOverview(bundle, toggles(stages));
      for (const s of ALL_STAGES) {
        const panel = panelOf(html, s);
        expect(panel).not.toBe("");
        if (stages.includes(s)) {
          expect(panel).toContain('data-state="on"');
        } else {
          // an off panel is the bare placeholder: nothing from stage JSON
          expect(panel).toBe(stagePanel(s, false, ""));
        }
      }
      expect(html).toMatchSnapshot();
    });
  }
});

describe("stage toggles gate content of a full bundle", () => {
  const bundle = overviewFixture("overview_U_C_Rl_Rg_P.json");

  it("U-only toggles leave no trace of the other stages", () => {
    const html = renderOverview(bundle, toggles(["U"]));
    for (const s of ["C", "Rl", "Rg", "P"]) {
      expect(panelOf(html, s)).toBe(stagePanel(s as Stage, false, ""));
    }
    // stage-derived content must not appear anywhere in the page
    expect(html).not.toContain('data-strip="C:');
    expect(html).not.toContain("interaction energy");
    expect(html).not.toContain("class-graph");
    expect(html).not.toContain("data-rl-feature=");
    expect(html).not.toContain("data-rg-feature=");
    expect(html).not.toContain("surrogate weight");
    const fit = bundle.P!.class_fits[bundle.target.class];
    const topCoeff = fit.coefficients[topWeighted(fit.coefficients, 1)[0]];
    expect(html).not.toContain(`>${formatNum(topCoeff)}</text>`);
  });

  it("all toggles on shows every stage", () => {
    const html = renderOverview(bundle, toggles(["U", "C", "Rl", "Rg", "P"]));
    for (const s of ALL_STAGES) {
      expect(panelOf(html, s)).toContain('data-state="on"');
    }
  });

  it("toggle bar reflects pressed state", () => {
    const html = renderOverview(bundle, toggles(["U", "P"]));
    expect(html).toContain('data-stage="U" aria-pressed="true"');
    expect(html).toContain('data-stage="C" aria-pressed="false"');
    expect(html).toContain('data-stage="P" aria-pressed="true"');
  });
});

describe("prediction graph", () => {
  const bundle = overviewFixture("overview_U_C_Rl_Rg_P.json");

  it("shows exactly five feature nodes for the predicted class", () => {
    const html = renderOverview(bundle, toggles(["P"]));
    const nodes = html.match(/<circle[^>]*class="feature-node"/g) ?? [];
    expect(nodes).toHaveLength(5);
    const edges = html.match(
      new RegExp(`data-edge="${bundle.target.class}:`, "g"),
    );
    expect(edges).toHaveLength(5);
  });

  it("labels each edge with the fit coefficient", () => {
    const html = renderOverview(bundle, toggles(["P"]));
    const fit = bundle.P!.class_fits[bundle.target.class];
    for (const j of topWeighted(fit.coefficients, 5)) {
      const label = new RegExp(
        `data-edge-label="${bundle.target.class}:${j}">` +
          formatNum(fit.coefficients[j]).replace(".", "\\.") +
          "</text>",
      );
      expect(html).toMatch(label);
    }
  });

  it("adds a true-class node when prediction and label differ", () => {
    const differing = {
      ...bundle,
      point: { ...bundle.point, label: 1 - bundle.target.class },
    };
    const html = renderOverview(differing, toggles(["P"]));
    expect(html).toContain(`data-class-node="${bundle.target.class}"`);
    expect(html).toContain(`data-class-node="${differing.point.label}"`);
    expect(html).toContain(">true</text>");
    expect(html).toContain(">predicted</text>");
    // matching case has a single class node
    const same = renderOverview(bundle, toggles(["P"]));
    expect(same.match(/data-class-node=/g)).toHaveLength(1);
    expect(same).not.toContain(">true</text>");
  });
});

describe("overview content details", () => {
  it("renders signed strips with a per-map scale note", () => {
    const bundle = overviewFixture("overview_U.json");
    const html = renderOverview(bundle, toggles(["U"]));
    for (const mod of Object.keys(bundle.U!.maps)) {
      expect(html).toContain(`data-strip="U:${mod}"`);
    }
    expect(html).toContain("scale &plusmn;");
    // one cell per atom of each modality strip
    const mapA = bundle.U!.maps["a"];
    const panel = panelOf(html, "U");
    const cells = panel.match(/data-atom="/g) ?? [];
    const total = Object.values(bundle.U!.maps).reduce(
      (n, m) => n + m.scores.length,
      0,
    );
    expect(cells).toHaveLength(total);
    expect(panel).toContain(`title="atom 0: ${formatNum(mapA.scores[0])}"`);
  });

  it("explicit-feature bundles render Rl without surrogate weights", () => {
    const bundle = overviewFixture("overview_U_C_Rl.json");
    const html = renderOverview(bundle, toggles(["U", "C", "Rl"]));
    for (const f of bundle.Rl!.features) {
      expect(html).toContain(`data-rl-feature="${f.feature}"`);
    }
    expect(html).not.toContain("surrogate weight");
  });

  it("rendering is pure: same fixture, identical markup", () => {
    const bundle = overviewFixture("overview_U_C.json");
    const a = renderOverview(bundle, toggles(["U", "C"]));
    const b = renderOverview(bundle, toggles(["U", "C"]));
    expect(a).toBe(b);
  });
});
