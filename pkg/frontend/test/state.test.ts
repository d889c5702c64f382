import { describe, expect, it } from "vitest";

import type { ServerFrame } from "../src/protocol.js";
import { ClientState, FrameMailbox } from "../src/state.js";

function frame(index: number, echo = 0): ServerFrame {
  return {
    type: "frame", v: 1, index,
    root: [0, 0, 0],
    joints: [[0, 0, 0]],
    contacts: [0, 0, 0, 0],
    traj_p: [[0, 0]], traj_d: [[0, 1]], traj_h: [0],
    gait: 0, echo_time: echo,
  };
}

describe("frame mailbox", () => {
  it("keeps only the newest frame", () => {
    const box = new FrameMailbox();
    box.put(frame(0));
    box.put(frame(1));
    box.put(frame(2));
    const got = box.take();
    expect(got?.index).toBe(2);
    expect(box.received).toBe(3);
    expect(box.dropped).toBe(2);
    expect(box.take()).toBeNull();
  });

  it("rendered indices are monotone", () => {
    const box = new FrameMailbox();
    box.put(frame(5));
    expect(box.take()?.index).toBe(5);
    box.put(frame(3)); // stale after a hiccup
    expect(box.take()).toBeNull();
    box.put(frame(6));
    expect(box.take()?.index).toBe(6);
    expect(box.rendered).toBe(2);
  });

  it("every received frame is rendered or counted dropped", () => {
    const box = new FrameMailbox();
    for (let i = 0; i < 10; i++) {
      box.put(frame(i));
      if (i % 3 === 0) box.take();
    }
    box.take();
    expect(box.rendered + box.dropped).toBe(box.received);
  });

  it("watermark reset allows a fresh session to restart at 0", () => {
    const box = new FrameMailbox();
    box.put(frame(40));
    box.take();
    box.resetIndexWatermark();
    box.put(frame(0));
    expect(box.take()?.index).toBe(0);
  });
});

describe("client stats", () => {
  it("tracks fps over a 2 s window and latency from echo times", () => {
    const state = new ClientState();
    for (let i = 0; i < 120; i++) {
      state.noteFrame(frame(i, i === 119 ? 1950 : 0), i * 16.7);
    }
    expect(state.fps).toBeGreaterThan(40);
    expect(state.latencyMs).toBeCloseTo(119 * 16.7 - 1950, 3);
  });
});
