import { describe, expect, it } from "vitest";

import {
  controlFromInput,
  GAITS,
  handleKeyDown,
  handleKeyUp,
  newInputState,
} from "../src/input.js";

describe("keyboard to control mapping", () => {
  it("no keys -> zero direction, standing", () => {
    const c = controlFromInput(newInputState());
    expect(c).toEqual({ dirX: 0, dirZ: 0, speed: 0, gait: GAITS.indexOf("standing") });
  });

  it("forward key -> (0, 1) walking by default", () => {
    const s = newInputState();
    handleKeyDown(s, "w");
    const c = controlFromInput(s);
    expect(c.dirX).toBe(0);
    expect(c.dirZ).toBe(1);
    expect(c.gait).toBe(GAITS.indexOf("walking"));
    expect(c.speed).toBeCloseTo(1.2);
  });

  it("diagonals are unit length", () => {
    const s = newInputState();
    handleKeyDown(s, "w");
    handleKeyDown(s, "d");
    const c = controlFromInput(s);
    expect(Math.hypot(c.dirX, c.dirZ)).toBeCloseTo(1, 9);
  });

  it("jump key while moving keeps the direction", () => {
    const s = newInputState();
    handleKeyDown(s, "ArrowUp");
    handleKeyDown(s, " ");
    const c = controlFromInput(s);
    expect(c.gait).toBe(GAITS.indexOf("jumping"));
    expect(c.dirZ).toBe(1);
  });

  it("shift while moving jogs; releasing restores walking", () => {
    const s = newInputState();
    handleKeyDown(s, "w");
    handleKeyDown(s, "Shift");
    expect(controlFromInput(s).gait).toBe(GAITS.indexOf("jogging"));
    handleKeyUp(s, "Shift");
    expect(controlFromInput(s).gait).toBe(GAITS.indexOf("walking"));
  });

  it("digit keys sticky-select each of the five gaits", () => {
    for (let digit = 1; digit <= 5; digit++) {
      const s = newInputState();
      handleKeyDown(s, String(digit));
      expect(controlFromInput(s).gait).toBe(digit - 1);
    }
  });

  it("pressing the same digit again clears the sticky selection", () => {
    const s = newInputState();
    handleKeyDown(s, "5");
    expect(controlFromInput(s).gait).toBe(4);
    handleKeyDown(s, "5");
    expect(controlFromInput(s).gait).toBe(GAITS.indexOf("standing"));
  });

  it("unhandled keys are ignored", () => {
    const s = newInputState();
    expect(handleKeyDown(s, "q")).toBe(false);
    expect(controlFromInput(s).gait).toBe(GAITS.indexOf("standing"));
  });

  it("opposite keys cancel to standing", () => {
    const s = newInputState();
    handleKeyDown(s, "w");
    handleKeyDown(s, "s");
    const c = controlFromInput(s);
    expect(c.dirX).toBe(0);
    expect(c.dirZ).toBe(0);
    expect(c.gait).toBe(GAITS.indexOf("standing"));
  });
});
